//! Writes a run directory, reloads its checkpoint and recomputes the
//! matrix game's Q_tot table from the saved parameters.

use optmarl::cli::{dump_qtable, load_run, run};
use optmarl::config::{EnvName, RunConfig};
use optmarl::training::q_table_csv;

fn main() -> optmarl::Result<()> {
    let cfg = RunConfig {
        steps: 1_000,
        out_dir: std::env::temp_dir().join("optmarl-checkpoint-example"),
        ..RunConfig::preset(EnvName::Matrix)
    };
    let outcome = run(&cfg)?;
    println!("run written to {}", outcome.dir.display());

    let (saved, bundle) = load_run(&outcome.dir)?;
    assert_eq!(saved, cfg);
    println!(
        "{} parameter matrices, {} scalars per copy",
        bundle.live.len(),
        bundle.live.num_scalars()
    );
    let table = dump_qtable(&outcome.dir)?;
    assert_eq!(Some(table), outcome.q_table);
    print!("{}", q_table_csv(&table));
    Ok(())
}
