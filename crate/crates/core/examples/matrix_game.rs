//! Trains VDN, QMIX and OPT-QMIX on the 3×3 matrix game and prints each
//! learned Q_tot table.
//!
//! cargo run --release --example matrix_game -- [steps] [seed]

use optmarl::config::{Algo, EnvName, RunConfig};
use optmarl::training::{matrix_greedy, matrix_q_table, Trainer};

fn main() -> optmarl::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(Ok(20_000), |s| s.parse()).expect("steps");
    let seed = args.next().map_or(Ok(0), |s| s.parse()).expect("seed");

    for algo in [Algo::Vdn, Algo::Qmix, Algo::OptQmix] {
        let cfg = RunConfig {
            algo,
            seed,
            steps,
            ..RunConfig::preset(EnvName::Matrix)
        };
        let mut trainer = Trainer::new(cfg)?;
        trainer.run(|_| Ok(()))?;
        let table = matrix_q_table(trainer.bundle())?;
        let (a, b) = matrix_greedy(trainer.bundle())?;
        println!("{algo}: greedy joint action (a{}, a{})", a + 1, b + 1);
        for row in table {
            println!("  {}", row.map(|v| format!("{v:8.2}")).join(" "));
        }
    }
    Ok(())
}
