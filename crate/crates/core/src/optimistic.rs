//! Scalar optimistic update and Monte-Carlo probes of its convergence.
//!
//! The optimistic estimate only moves when a reward exceeds it, so the
//! sequence never decreases and never passes the largest reward seen. The
//! lower-bound companion only moves on rewards equal to `r_max`; its
//! expectation has a closed form that bounds the optimistic estimate's
//! convergence via Markov's inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimisticScalar {
    pub value: f64,
    pub learn_rate: f64,
}

impl OptimisticScalar {
    pub fn new(value: f64, learn_rate: f64) -> Self {
        OptimisticScalar { value, learn_rate }
    }

    /// Moves toward `r` by `learn_rate` only when `r` is above the estimate.
    pub fn update(self, r: f64) -> Self {
        if r > self.value {
            OptimisticScalar {
                value: self.value + self.learn_rate * (r - self.value),
                ..self
            }
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundScalar {
    pub value: f64,
    pub learn_rate: f64,
    pub r_max: f64,
}

impl LowerBoundScalar {
    pub fn new(value: f64, learn_rate: f64, r_max: f64) -> Self {
        LowerBoundScalar {
            value,
            learn_rate,
            r_max,
        }
    }

    /// Moves toward `r_max` only when the observed reward equals it.
    pub fn update(self, r: f64) -> Self {
        if r == self.r_max {
            LowerBoundScalar {
                value: self.value + self.learn_rate * (r - self.value),
                ..self
            }
        } else {
            self
        }
    }
}

/// Value of the lower-bound sequence after `n` updates at `r_max`:
/// `r_max + (1−α)ⁿ(f₀ − r_max)`.
pub fn closed_form_after_n(f0: f64, r_max: f64, learn_rate: f64, n: u32) -> f64 {
    r_max + (1.0 - learn_rate).powi(n as i32) * (f0 - r_max)
}

/// Setup of a convergence experiment: at each step the peers act optimally
/// with probability `c` (reward `r_max`), otherwise the reward is drawn
/// uniformly from `other_rewards`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceProbeConfig {
    pub c: f64,
    pub learn_rate: f64,
    pub f0: f64,
    pub r_max: f64,
    pub other_rewards: Vec<f64>,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ConvergenceProbeConfig {
    fn default() -> Self {
        ConvergenceProbeConfig {
            c: 0.3,
            learn_rate: 0.1,
            f0: 0.0,
            r_max: 8.0,
            other_rewards: vec![-12.0, 0.0],
            horizon: 100,
            trials: 100_000,
            seed: 0,
        }
    }
}

impl ConvergenceProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::config("c", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.learn_rate) {
            return Err(Error::config("alpha", "must lie in [0, 1]"));
        }
        if self.f0 > self.r_max {
            return Err(Error::config("f0", "must not exceed r_max"));
        }
        if self.c < 1.0 && self.other_rewards.is_empty() {
            return Err(Error::config("other_rewards", "need at least one reward below r_max"));
        }
        if self.other_rewards.iter().any(|&r| r >= self.r_max) {
            return Err(Error::config("other_rewards", "must lie strictly below r_max"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be positive"));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        if rng.gen_bool(self.c) {
            self.r_max
        } else {
            self.other_rewards[rng.gen_range(0..self.other_rewards.len())]
        }
    }
}

/// `E[f′_t] = r_max + (f₀ − r_max)(1 − cα)ᵗ`
pub fn expected_lower_bound(cfg: &ConvergenceProbeConfig, t: usize) -> f64 {
    cfg.r_max + (cfg.f0 - cfg.r_max) * (1.0 - cfg.c * cfg.learn_rate).powi(t as i32)
}

/// One row of a convergence report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub t: usize,
    /// Fraction of trials with `r_max − f_t ≥ tol`.
    pub empirical_tail: f64,
    /// `(r_max − f₀)(1 − cα)ᵗ / tol`
    pub markov_bound: f64,
    /// Monte-Carlo mean of the lower-bound sequence `f′_t`.
    pub mean_f: f64,
    /// Standard error of `mean_f`.
    pub mean_f_se: f64,
    /// Monte-Carlo mean of the optimistic sequence `f_t`.
    pub mean_opt: f64,
    pub expected_f: f64,
}

impl ProbeRow {
    /// Three binomial standard errors around the bound (clamped to a
    /// probability), the slack allowed for the empirical tail.
    pub fn tail_slack(&self, trials: usize) -> f64 {
        let b = self.markov_bound.clamp(0.0, 1.0);
        3.0 * (b * (1.0 - b) / trials as f64).sqrt()
    }

    pub fn tail_within_bound(&self, trials: usize) -> bool {
        self.empirical_tail <= self.markov_bound + self.tail_slack(trials)
    }
}

/// Simulates `cfg.trials` independent co-iterated (optimistic, lower bound)
/// pairs for `cfg.horizon` steps and reports statistics at every `t`.
pub fn convergence_probe(cfg: &ConvergenceProbeConfig, tol: f64) -> Result<Vec<ProbeRow>> {
    cfg.validate()?;
    if !(tol > 0.0) {
        return Err(Error::config("eps_tol", "must be positive"));
    }
    let steps = cfg.horizon + 1;
    let mut tail = vec![0u64; steps];
    let mut sum_lb = vec![0.0; steps];
    let mut sum_lb_sq = vec![0.0; steps];
    let mut sum_opt = vec![0.0; steps];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.trials {
        let mut f = OptimisticScalar::new(cfg.f0, cfg.learn_rate);
        let mut lb = LowerBoundScalar::new(cfg.f0, cfg.learn_rate, cfg.r_max);
        for t in 0..steps {
            if t > 0 {
                let r = cfg.draw(&mut rng);
                f = f.update(r);
                lb = lb.update(r);
            }
            if cfg.r_max - f.value >= tol {
                tail[t] += 1;
            }
            sum_lb[t] += lb.value;
            sum_lb_sq[t] += lb.value * lb.value;
            sum_opt[t] += f.value;
        }
    }

    let m = cfg.trials as f64;
    Ok((0..steps)
        .map(|t| {
            let mean = sum_lb[t] / m;
            let var = (sum_lb_sq[t] / m - mean * mean).max(0.0);
            ProbeRow {
                t,
                empirical_tail: tail[t] as f64 / m,
                markov_bound: (cfg.r_max - cfg.f0)
                    * (1.0 - cfg.c * cfg.learn_rate).powi(t as i32)
                    / tol,
                mean_f: mean,
                mean_f_se: (var / m).sqrt(),
                mean_opt: sum_opt[t] / m,
                expected_f: expected_lower_bound(cfg, t),
            }
        })
        .collect())
}

/// Writes `t, empirical_tail, markov_bound, mean_f, expected_f`.
pub fn write_probe_csv<W: std::io::Write>(rows: &[ProbeRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "empirical_tail", "markov_bound", "mean_f", "expected_f"])?;
    for r in rows {
        w.write_record(&[
            r.t.to_string(),
            r.empirical_tail.to_string(),
            r.markov_bound.to_string(),
            r.mean_f.to_string(),
            r.expected_f.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn below_estimate_is_ignored() {
        assert_eq!(OptimisticScalar::new(5.0, 0.5).update(3.0).value, 5.0);
    }

    #[test]
    fn half_step() {
        assert_eq!(OptimisticScalar::new(0.0, 0.5).update(8.0).value, 4.0);
    }

    #[test]
    fn hand_iterated_stream() {
        // The third reward (5) is above 2.82, so the estimate moves on it too.
        let mut f = OptimisticScalar::new(0.0, 0.3);
        let mut got = Vec::new();
        for r in [2.0, 8.0, 5.0, 8.0] {
            f = f.update(r);
            got.push(f.value);
        }
        let mut oracle = Vec::new();
        let mut v: f64 = 0.0;
        for r in [2.0f64, 8.0, 5.0, 8.0] {
            if r > v {
                v += 0.3 * (r - v);
            }
            oracle.push(v);
        }
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-12);
        }
        assert!((got[0] - 0.6).abs() < 1e-12);
        assert!((got[1] - 2.82).abs() < 1e-12);
        assert!((got[2] - 3.474).abs() < 1e-12);
        assert!((got[3] - 4.8318).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_guard() {
        let lb = LowerBoundScalar::new(0.0, 0.5, 8.0);
        assert_eq!(lb.update(7.9).value, 0.0);
        assert_eq!(lb.update(8.0).value, 4.0);
    }

    #[test]
    fn lower_bound_trails_optimistic() {
        let mut f = OptimisticScalar::new(0.0, 0.3);
        let mut lb = LowerBoundScalar::new(0.0, 0.3, 8.0);
        for r in [2.0, 8.0, 5.0, 8.0] {
            f = f.update(r);
            lb = lb.update(r);
            assert!(f.value >= lb.value);
        }
    }

    #[test]
    fn closed_form_cases() {
        assert_eq!(closed_form_after_n(1.5, 8.0, 0.3, 0), 1.5);
        assert_eq!(closed_form_after_n(1.5, 8.0, 1.0, 1), 8.0);
        assert_eq!(closed_form_after_n(0.0, 8.0, 0.5, 2), 6.0);
        let lb = LowerBoundScalar::new(0.0, 0.5, 8.0).update(8.0).update(8.0);
        assert_eq!(lb.value, 6.0);
    }

    #[test]
    fn expectation_edge_cases() {
        let cfg = ConvergenceProbeConfig {
            f0: -3.0,
            ..Default::default()
        };
        assert_eq!(expected_lower_bound(&cfg, 0), -3.0);
        let full = ConvergenceProbeConfig {
            c: 1.0,
            learn_rate: 1.0,
            ..Default::default()
        };
        assert_eq!(expected_lower_bound(&full, 1), full.r_max);
    }

    #[test]
    fn zero_c_rejected() {
        let cfg = ConvergenceProbeConfig {
            c: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            convergence_probe(&cfg, 0.5),
            Err(Error::Config { key, .. }) if key == "c"
        ));
    }

    #[test]
    fn frozen_learning_rate_keeps_tail_at_one() {
        let cfg = ConvergenceProbeConfig {
            learn_rate: 0.0,
            trials: 2000,
            horizon: 30,
            ..Default::default()
        };
        let rows = convergence_probe(&cfg, 1.0).unwrap();
        assert!(rows.iter().all(|r| r.empirical_tail == 1.0 && r.mean_opt == 0.0));
    }

    #[test]
    fn certain_full_step_converges_at_once() {
        let cfg = ConvergenceProbeConfig {
            c: 1.0,
            learn_rate: 1.0,
            trials: 1000,
            horizon: 10,
            ..Default::default()
        };
        let rows = convergence_probe(&cfg, 0.1).unwrap();
        assert_eq!(rows[0].empirical_tail, 1.0);
        assert!(rows[1..].iter().all(|r| r.empirical_tail == 0.0));
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(
            f0 in -20.0f64..20.0,
            alpha in 0.0f64..=1.0,
            stream in prop::collection::vec(-20.0f64..20.0, 1..40),
        ) {
            let mut f = OptimisticScalar::new(f0, alpha);
            let mut running_max = f0;
            for &r in &stream {
                let next = f.update(r);
                prop_assert!(next.value >= f.value);
                running_max = running_max.max(r);
                prop_assert!(next.value <= running_max);
                f = next;
            }
        }
    }
}
