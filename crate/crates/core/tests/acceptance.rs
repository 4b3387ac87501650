//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Training runs are written under `<target>/tmp/acceptance/` and reused
//! when their saved `config.txt` matches and the run finished. Set
//! `OPTMARL_ACCEPTANCE_FRESH=1` to retrain everything.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{
    closed_form_gap, gradient_instance, igm_trial, lemma_violations, theorem2_violations, FAMILIES,
};
use optmarl::cli::{self, MetricsTable, CONFIG_FILE, METRICS_FILE};
use optmarl::config::{Algo, EnvName, FlatConfig, RunConfig};
use optmarl::optimistic::{convergence_probe, ConvergenceProbeConfig};
use optmarl::training::{matrix_greedy, matrix_q_table};

const SEEDS_MATRIX: u64 = 10;
const SEEDS_PREDPREY: u64 = 5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn out_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn fresh() -> bool {
    std::env::var("OPTMARL_ACCEPTANCE_FRESH").is_ok_and(|v| v == "1")
}

/// Final state of one training run.
struct Finished {
    final_return: f64,
    greedy: Option<(usize, usize)>,
    q: Option<[[f64; 3]; 3]>,
}

fn from_cache(cfg: &RunConfig) -> Option<Finished> {
    let dir = cfg.run_dir();
    if fs::read_to_string(dir.join(CONFIG_FILE)).ok()? != cfg.to_kv().serialize() {
        return None;
    }
    let (_, bundle) = cli::load_run(&dir).ok()?;
    let table = MetricsTable::read(&dir.join(METRICS_FILE)).ok()?;
    let last = table.rows.last()?;
    if last[table.column("step")?] < cfg.steps as f64 {
        return None;
    }
    let matrix = cfg.env == EnvName::Matrix;
    Some(Finished {
        final_return: last[table.column("eval_mean_return")?],
        greedy: if matrix { matrix_greedy(&bundle).ok() } else { None },
        q: if matrix { matrix_q_table(&bundle).ok() } else { None },
    })
}

fn finish(cfg: &RunConfig) -> Finished {
    let label = cfg.run_dir().display().to_string();
    if !fresh() {
        if let Some(f) = from_cache(cfg) {
            eprintln!("  {label} (cached)");
            return f;
        }
    }
    let start = Instant::now();
    let out = cli::run(cfg).unwrap_or_else(|e| panic!("{label}: {e}"));
    eprintln!("  {label} trained in {:.0}s", start.elapsed().as_secs_f64());
    Finished {
        final_return: out.final_row().eval_mean_return,
        greedy: out.greedy,
        q: out.q_table,
    }
}

fn config(env: EnvName, algo: Algo, seed: u64) -> RunConfig {
    RunConfig {
        algo,
        seed,
        out_dir: out_root(),
        ..RunConfig::preset(env)
    }
}

fn matrix_runs(algo: Algo) -> Vec<Finished> {
    (0..SEEDS_MATRIX).map(|s| finish(&config(EnvName::Matrix, algo, s))).collect()
}

fn fmt_runs(runs: &[Finished]) -> String {
    runs.iter()
        .map(|r| {
            let (a, b) = r.greedy.unwrap();
            format!("({a},{b}):{:.2}", r.q.unwrap()[0][0])
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_1() -> Verdict {
    let runs = matrix_runs(Algo::OptQmix);
    let good = runs
        .iter()
        .filter(|r| r.greedy == Some((0, 0)) && (r.q.unwrap()[0][0] - 8.0).abs() <= 1.5)
        .count();
    Verdict {
        pass: good >= 8,
        detail: format!(
            "opt-qmix greedy (a1,a1) with Q_tot in 8±1.5 in {good}/{SEEDS_MATRIX} seeds [{}]",
            fmt_runs(&runs)
        ),
    }
}

fn criterion_2() -> Verdict {
    let qmix = matrix_runs(Algo::Qmix);
    let vdn = matrix_runs(Algo::Vdn);
    let q_bad = qmix
        .iter()
        .filter(|r| r.greedy != Some((0, 0)) && r.q.unwrap()[0][0] < 0.0)
        .count();
    let v_bad = vdn.iter().filter(|r| r.greedy != Some((0, 0))).count();
    Verdict {
        pass: q_bad >= 8 && v_bad >= 8,
        detail: format!(
            "qmix misses (a1,a1) with Q_tot(a1,a1)<0 in {q_bad}/{SEEDS_MATRIX} [{}]; \
             vdn misses (a1,a1) in {v_bad}/{SEEDS_MATRIX} [{}]",
            fmt_runs(&qmix),
            fmt_runs(&vdn)
        ),
    }
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let lemmas = lemma_violations(1_000_000, 20, 3);
    let gap = closed_form_gap(100_000, 3);
    let cfg = ConvergenceProbeConfig::default();
    let rows = convergence_probe(&cfg, 0.5).expect("default probe is valid");
    let mean_off = rows
        .iter()
        .filter(|r| (r.mean_f - r.expected_f).abs() > 3.0 * r.mean_f_se.max(1e-12))
        .count();
    let tail_off = rows.iter().filter(|r| !r.tail_within_bound(cfg.trials)).count();
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: lemmas == 0 && gap < 1e-12 && mean_off == 0 && tail_off == 0 && secs < 60.0,
        detail: format!(
            "lemma violations {lemmas} on 10^6 streams; closed-form gap {gap:.1e}; \
             mean outside 3 SE at {mean_off}/{} t; tails above bound at {tail_off}; {secs:.1}s",
            rows.len()
        ),
    }
}

fn criterion_4() -> Verdict {
    let bad = theorem2_violations(100_000, 4);
    Verdict {
        pass: bad == 0,
        detail: format!("{bad} violations in 10^5 draws"),
    }
}

fn criterion_5() -> Verdict {
    let (mut mono, mut igm) = (0, 0);
    for seed in 0..1000 {
        let (m, i) = igm_trial(1_000_000 + seed);
        mono += m;
        igm += i;
    }
    Verdict {
        pass: mono == 0 && igm == 0,
        detail: format!("1000 trials: {mono} monotonicity, {igm} argmax violations"),
    }
}

fn criterion_6() -> Verdict {
    let per_family = 15;
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for (k, fam) in FAMILIES.iter().enumerate() {
        for i in 0..per_family {
            let e = gradient_instance(fam, 10_000 + (k * 100 + i) as u64);
            worst = worst.max(e);
            if !(e < 1e-4) {
                failed.push(format!("{fam}#{i}"));
            }
        }
    }
    Verdict {
        pass: failed.is_empty(),
        detail: format!(
            "{} instances over {} families, worst relative error {worst:.2e}, failures {failed:?}",
            per_family * FAMILIES.len(),
            FAMILIES.len()
        ),
    }
}

fn criterion_7() -> Verdict {
    let run = |algo| -> Vec<f64> {
        (0..SEEDS_PREDPREY)
            .map(|s| finish(&config(EnvName::PredPrey, algo, s)).final_return)
            .collect()
    };
    let opt = run(Algo::OptQmix);
    let qmix = run(Algo::Qmix);
    let wins = opt.iter().zip(&qmix).filter(|(o, q)| **o > 0.0 && o > q).count();
    let qmix_mean = qmix.iter().sum::<f64>() / qmix.len() as f64;
    Verdict {
        pass: wins >= 4 && qmix_mean <= 1.0,
        detail: format!(
            "opt-qmix > 0 and > qmix in {wins}/{SEEDS_PREDPREY} seeds; qmix mean {qmix_mean:.3} (≤ 1); \
             opt {opt:.3?} qmix {qmix:.3?}"
        ),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("1 matrix game, opt-qmix finds the optimum", criterion_1),
        ("2 matrix game, qmix/vdn miss the optimum", criterion_2),
        ("3 optimistic operator suite", criterion_3),
        ("4 optimistic exploration favours argmax f", criterion_4),
        ("5 qmix monotonicity and argmax consistency", criterion_5),
        ("6 gradient suite", criterion_6),
        ("7 predator-prey, opt-qmix vs qmix", criterion_7),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        eprintln!("criterion {name} ...");
        let start = Instant::now();
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failures += usize::from(!v.pass);
        println!(
            "[{tag}] criterion {name}: {} ({:.0}s)",
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 7 criteria passed", 7 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
