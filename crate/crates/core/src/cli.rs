//! Experiment runner: seeded runs that write their files to a run
//! directory, parallel multi-seed launches, the optimistic-operator probe,
//! and cross-seed summaries.
//!
//! A run directory holds
//! - `config.txt`: the resolved configuration (`key = value`),
//! - `metrics.csv`: one row per evaluation,
//! - `checkpoint.bin`: live and target parameters,
//! - `qtable.csv`: the matrix game's `Q_tot` for all joint actions.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use crate::config::{EnvName, FlatConfig, KeyValues, RunConfig};
use crate::error::{Error, Result};
use crate::networks::{load_checkpoint_into, write_checkpoint, AgentNetBundle};
use crate::optimistic::{convergence_probe, write_probe_csv, ConvergenceProbeConfig, ProbeRow};
use crate::training::{
    matrix_greedy, matrix_q_table, q_table_csv, MetricsRow, Trainer, METRICS_HEADER,
};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "OPTMARL_OUT";

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const QTABLE_FILE: &str = "qtable.csv";

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub q_table: Option<[[f64; 3]; 3]>,
    pub greedy: Option<(usize, usize)>,
}

impl RunOutcome {
    pub fn final_row(&self) -> &MetricsRow {
        self.rows.last().expect("a run emits at least one row")
    }
}

/// Trains one configuration and writes its run directory.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_kv().serialize())?;

    let mut trainer = Trainer::new(cfg.clone())?;
    let mut csv = csv::Writer::from_path(dir.join(METRICS_FILE))?;
    csv.write_record(METRICS_HEADER)?;
    let rows = trainer.run(|row| {
        csv.write_record(row.fields())?;
        csv.flush()?;
        log::info!(
            "{} step {} return {:.3} success {:.3}",
            dir.display(),
            row.step,
            row.eval_mean_return,
            row.eval_win_or_optimal_rate
        );
        Ok(())
    })?;
    drop(csv);

    let bundle = trainer.bundle();
    let mut out = BufWriter::new(File::create(dir.join(CHECKPOINT_FILE))?);
    write_checkpoint(&mut out, &[("live", &bundle.live), ("target", &bundle.target)])?;
    out.flush()?;

    let (q_table, greedy) = if cfg.env == EnvName::Matrix {
        let table = matrix_q_table(bundle)?;
        fs::write(dir.join(QTABLE_FILE), q_table_csv(&table))?;
        (Some(table), Some(matrix_greedy(bundle)?))
    } else {
        (None, None)
    };
    Ok(RunOutcome {
        dir,
        rows,
        q_table,
        greedy,
    })
}

/// Runs configurations on up to `jobs` worker threads. Each run is
/// independent and writes only its own directory. Results keep input order.
pub fn run_many(cfgs: &[RunConfig], jobs: usize) -> Result<Vec<RunOutcome>> {
    for cfg in cfgs {
        cfg.validate()?;
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutcome>>>> =
        Mutex::new((0..cfgs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, cfgs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = cfgs.get(i) else { break };
                let r = run(cfg);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every index was claimed"))
        .collect()
}

/// Rebuilds the configuration and networks saved in a run directory.
pub fn load_run(dir: &Path) -> Result<(RunConfig, AgentNetBundle)> {
    let kv = KeyValues::read(&dir.join(CONFIG_FILE))?;
    let cfg = RunConfig::resolve(Some(&kv), &KeyValues::new())?;
    let mut bundle = Trainer::new(cfg.clone())?.learner.bundle;
    let input = BufReader::new(File::open(dir.join(CHECKPOINT_FILE))?);
    load_checkpoint_into(
        input,
        &mut [("live", &mut bundle.live), ("target", &mut bundle.target)],
    )?;
    Ok((cfg, bundle))
}

/// Recomputes the matrix game's `Q_tot` table from a saved run.
pub fn dump_qtable(dir: &Path) -> Result<[[f64; 3]; 3]> {
    let (cfg, bundle) = load_run(dir)?;
    if cfg.env != EnvName::Matrix {
        return Err(Error::config("env", "the Q_tot table exists only for the matrix game"));
    }
    matrix_q_table(&bundle)
}

/// Runs the convergence probe and writes its CSV report.
/// `tol` is the deviation `|f_t − r_max|` whose probability is reported.
pub fn verify_optimistic<W: Write>(
    cfg: &ConvergenceProbeConfig,
    tol: f64,
    out: W,
) -> Result<Vec<ProbeRow>> {
    let rows = convergence_probe(cfg, tol)?;
    write_probe_csv(&rows, out)?;
    Ok(rows)
}

/// A numeric CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricsTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .zip(&header)
                .map(|(v, k)| crate::config::parse_value::<f64>(k, v))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(MetricsTable { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn steps(&self) -> Vec<f64> {
        let c = self.column("step").unwrap_or(0);
        self.rows.iter().map(|r| r[c]).collect()
    }

    /// Linear interpolation of column `c` at `step`, clamped to the ends.
    fn at(&self, c: usize, step: f64) -> f64 {
        let s = self.steps();
        let k = s.partition_point(|&x| x < step);
        if k == 0 {
            return self.rows[0][c];
        }
        if k == s.len() {
            return self.rows[k - 1][c];
        }
        if s[k] == step {
            return self.rows[k][c];
        }
        let (x0, x1) = (s[k - 1], s[k]);
        let (y0, y1) = (self.rows[k - 1][c], self.rows[k][c]);
        y0 + (y1 - y0) * (step - x0) / (x1 - x0)
    }
}

/// Per-step mean and min/max envelope of every metric column across runs.
/// Runs with different step grids are resampled onto the coarsest one.
/// Returns the table and any warnings.
pub fn summarize(tables: &[MetricsTable]) -> Result<(MetricsTable, Vec<String>)> {
    let first = tables.first().ok_or_else(|| Error::usage("summarize needs at least one run"))?;
    if first.column("step").is_none() {
        return Err(Error::usage("metrics without a `step` column"));
    }
    for t in tables {
        if t.header != first.header {
            return Err(Error::usage("runs have different metric columns"));
        }
        if t.rows.is_empty() {
            return Err(Error::usage("a run has no metric rows"));
        }
    }
    let mut warnings = Vec::new();
    let grid = if tables.iter().all(|t| t.steps() == first.steps()) {
        first.steps()
    } else {
        let coarsest = tables.iter().min_by_key(|t| t.rows.len()).expect("non-empty");
        let w = format!(
            "step grids differ; resampling onto the coarsest grid ({} points)",
            coarsest.rows.len()
        );
        log::warn!("{w}");
        warnings.push(w);
        coarsest.steps()
    };
    let metrics: Vec<(usize, &String)> = first
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| *h != "step" && *h != "episode")
        .collect();
    let mut header = vec!["step".to_string()];
    for (_, h) in &metrics {
        header.extend([format!("{h}_mean"), format!("{h}_min"), format!("{h}_max")]);
    }
    let rows = grid
        .iter()
        .map(|&step| {
            let mut row = vec![step];
            for &(c, _) in &metrics {
                let vals: Vec<f64> = tables.iter().map(|t| t.at(c, step)).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let fold = |f: fn(f64, f64) -> f64| vals.iter().copied().reduce(f).expect("non-empty");
                row.extend([mean, fold(f64::min), fold(f64::max)]);
            }
            row
        })
        .collect();
    Ok((MetricsTable { header, rows }, warnings))
}

pub fn write_table<W: Write>(table: &MetricsTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "optmarl", version, about = "Value-decomposition MARL with optimistic exploration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Configuration overrides as `--key value` or `--key=value`; any
    /// configuration key is accepted (dashes and underscores are equivalent).
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one seeded run.
    Run(RunArgs),
    /// Train several seeds in parallel.
    RunMany {
        /// Seeds as a list (`0,1,2`) or half-open range (`0..10`).
        #[arg(long, default_value = "0..9")]
        seeds: String,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Monte-Carlo check of the optimistic update's convergence.
    VerifyOptimistic {
        /// Probability that the other agents act optimally.
        #[arg(long, default_value_t = 0.3)]
        c: f64,
        /// Learning rate of the optimistic update.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        f0: f64,
        #[arg(long, default_value_t = 8.0, allow_hyphen_values = true)]
        r_max: f64,
        /// Rewards of non-optimal joint actions.
        #[arg(long, value_delimiter = ',', default_value = "-12,0", allow_hyphen_values = true)]
        others: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Deviation from r_max whose probability is tracked.
        #[arg(long, default_value_t = 0.5)]
        tol: f64,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean and min/max envelope of metrics across run directories.
    Summarize {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the matrix game's Q_tot table of a saved run.
    DumpQtable { run: PathBuf },
}

/// Splits `--key value` / `--key=value` tokens into configuration pairs.
pub fn parse_overrides(tokens: &[String]) -> Result<KeyValues> {
    let mut kv = KeyValues::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(flag) = tok.strip_prefix("--") else {
            return Err(Error::usage(format!("expected `--key value`, got `{tok}`")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::config(flag.replace('-', "_"), "missing value"))?;
                (flag.to_string(), v.clone())
            }
        };
        kv.set(&key.replace('-', "_"), value);
    }
    Ok(kv)
}

/// Resolves a run configuration: preset, then the output root from
/// [`OUT_ENV`], then the config file, then flag overrides.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut base = KeyValues::new();
    if let Ok(root) = std::env::var(OUT_ENV) {
        base.set("out_dir", root);
    }
    if let Some(path) = &args.config {
        for (k, v) in KeyValues::read(path)?.iter() {
            base.set(k, v);
        }
    }
    let overrides = parse_overrides(&args.overrides)?;
    RunConfig::resolve(Some(&base), &overrides)
}

pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seeds", format!("cannot parse `{spec}`"));
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = resolve_config(&args)?;
            let out = run(&cfg)?;
            let last = out.final_row();
            println!(
                "{}: step {} eval_mean_return {} eval_win_or_optimal_rate {}",
                out.dir.display(),
                last.step,
                last.eval_mean_return,
                last.eval_win_or_optimal_rate
            );
        }
        Command::RunMany { seeds, jobs, run } => {
            let base = resolve_config(&run)?;
            let cfgs: Vec<RunConfig> = parse_seeds(&seeds)?
                .into_iter()
                .map(|seed| RunConfig { seed, ..base.clone() })
                .collect();
            for out in run_many(&cfgs, jobs)? {
                let last = out.final_row();
                println!(
                    "{}: eval_mean_return {} eval_win_or_optimal_rate {}",
                    out.dir.display(),
                    last.eval_mean_return,
                    last.eval_win_or_optimal_rate
                );
            }
        }
        Command::VerifyOptimistic {
            c,
            alpha,
            f0,
            r_max,
            others,
            horizon,
            trials,
            seed,
            tol,
            out,
        } => {
            let cfg = ConvergenceProbeConfig {
                c,
                learn_rate: alpha,
                f0,
                r_max,
                other_rewards: others,
                horizon,
                trials,
                seed,
            };
            let rows = verify_optimistic(&cfg, tol, output(&out)?)?;
            let violations = rows.iter().filter(|r| !r.tail_within_bound(trials)).count();
            if violations > 0 {
                log::warn!("{violations} probed steps exceed the tail bound");
            }
        }
        Command::Summarize { runs, out } => {
            let tables = runs
                .iter()
                .map(|d| MetricsTable::read(&d.join(METRICS_FILE)))
                .collect::<Result<Vec<_>>>()?;
            let (table, warnings) = summarize(&tables)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            write_table(&table, output(&out)?)?;
        }
        Command::DumpQtable { run } => {
            print!("{}", q_table_csv(&dump_qtable(&run)?));
        }
    }
    Ok(())
}
