//! Runs several seeds of the matrix game into a scratch directory and
//! prints the mean and min/max envelope of their metrics.

use optmarl::cli::{run_many, summarize, write_table, MetricsTable, METRICS_FILE};
use optmarl::config::{Algo, EnvName, RunConfig};

fn main() -> optmarl::Result<()> {
    let out = std::env::temp_dir().join("optmarl-summary-example");
    let cfgs: Vec<RunConfig> = (0..3)
        .map(|seed| RunConfig {
            algo: Algo::Qmix,
            seed,
            steps: 2_000,
            eval_interval: 500,
            out_dir: out.clone(),
            ..RunConfig::preset(EnvName::Matrix)
        })
        .collect();
    let outcomes = run_many(&cfgs, 2)?;
    let tables = outcomes
        .iter()
        .map(|o| MetricsTable::read(&o.dir.join(METRICS_FILE)))
        .collect::<optmarl::Result<Vec<_>>>()?;
    let (summary, warnings) = summarize(&tables)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    write_table(&summary, std::io::stdout())
}
