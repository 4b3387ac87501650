//! The scalar optimistic update on a reward stream, then a Monte-Carlo
//! probe of its convergence to r_max written as CSV.
//!
//! cargo run --release --example optimistic_operator > probe.csv

use optmarl::optimistic::{
    closed_form_after_n, convergence_probe, write_probe_csv, ConvergenceProbeConfig,
    LowerBoundScalar, OptimisticScalar,
};

fn main() -> optmarl::Result<()> {
    let mut f = OptimisticScalar::new(0.0, 0.3);
    for r in [2.0, 8.0, 5.0, 8.0] {
        f = f.update(r);
        eprintln!("reward {r:4} -> f = {:.4}", f.value);
    }

    let mut lb = LowerBoundScalar::new(-4.0, 0.2, 8.0);
    for _ in 0..5 {
        lb = lb.update(8.0);
    }
    eprintln!(
        "lower bound after 5 maxima: {:.6} (closed form {:.6})",
        lb.value,
        closed_form_after_n(-4.0, 8.0, 0.2, 5)
    );

    let cfg = ConvergenceProbeConfig {
        trials: 20_000,
        ..Default::default()
    };
    let rows = convergence_probe(&cfg, 0.5)?;
    let ok = rows.iter().all(|r| r.tail_within_bound(cfg.trials));
    eprintln!("tails within Markov bound at every t: {ok}");
    write_probe_csv(&rows, std::io::stdout())
}
