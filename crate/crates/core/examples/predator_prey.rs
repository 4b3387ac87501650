//! Short predator-prey training run that streams the metrics rows.
//!
//! cargo run --release --example predator_prey -- [algo] [steps]

use optmarl::config::{EnvName, RunConfig};
use optmarl::training::{Trainer, METRICS_HEADER};

fn main() -> optmarl::Result<()> {
    let mut args = std::env::args().skip(1);
    let algo = args.next().unwrap_or_else(|| "opt-qmix".into()).parse()?;
    let steps = args.next().map_or(Ok(5_000), |s| s.parse()).expect("steps");

    let cfg = RunConfig {
        algo,
        steps,
        eval_interval: 1_000,
        eval_episodes: 8,
        ..RunConfig::preset(EnvName::PredPrey)
    };
    println!("{}", METRICS_HEADER.join(","));
    Trainer::new(cfg)?.run(|row| {
        println!("{}", row.fields().join(","));
        Ok(())
    })?;
    Ok(())
}
