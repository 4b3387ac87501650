//! Action selection for decentralized agents: plain epsilon-greedy and the
//! optimistic variant that spends its exploration mass on a softmax over
//! optimistic estimates instead of a uniform draw.

use rand::Rng;

use crate::error::{Error, Result};

/// `start + (end − start)·min(t/horizon, 1)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: usize,
}

impl LinearSchedule {
    pub fn new(start: f64, end: f64, horizon: usize) -> Self {
        LinearSchedule {
            start,
            end,
            horizon,
        }
    }

    pub fn constant(v: f64) -> Self {
        LinearSchedule::new(v, v, 1)
    }

    pub fn value(&self, t: usize) -> f64 {
        if t >= self.horizon {
            return self.end;
        }
        self.start + (self.end - self.start) * (t as f64 / self.horizon as f64)
    }
}

/// Free-function form of [`LinearSchedule::value`].
pub fn anneal(s: &LinearSchedule, t: usize) -> f64 {
    s.value(t)
}

/// Probability per action; nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
            }
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left u above the final cumulative sum
        last_positive
    }
}

/// Index of the largest entry among allowed actions, lowest index on ties.
pub fn masked_argmax(values: &[f64], mask: Option<&[bool]>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn argmax(values: &[f64]) -> Option<usize> {
    masked_argmax(values, None)
}

fn check_mask(n: usize, mask: Option<&[bool]>) -> Result<usize> {
    match mask {
        Some(m) if m.len() != n => Err(Error::usage(format!(
            "mask has {} entries for {n} actions",
            m.len()
        ))),
        Some(m) => match m.iter().filter(|&&b| b).count() {
            0 => Err(Error::usage("every action is masked out")),
            k => Ok(k),
        },
        None => Ok(n),
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::usage(format!("epsilon {eps} outside [0, 1]")));
    }
    Ok(())
}

/// Greedy action with probability `1 − ε`, uniform over the allowed actions
/// with probability `ε`.
pub fn epsilon_greedy_dist(q: &[f64], eps: f64) -> Result<ActionDistribution> {
    masked_epsilon_greedy_dist(q, eps, None)
}

pub fn masked_epsilon_greedy_dist(
    q: &[f64],
    eps: f64,
    mask: Option<&[bool]>,
) -> Result<ActionDistribution> {
    if q.is_empty() {
        return Err(Error::usage("no actions"));
    }
    check_epsilon(eps)?;
    let allowed = check_mask(q.len(), mask)?;
    let best = masked_argmax(q, mask).expect("at least one allowed action");
    let share = eps / allowed as f64;
    let mut probs: Vec<f64> = (0..q.len())
        .map(|i| if mask.is_some_and(|m| !m[i]) { 0.0 } else { share })
        .collect();
    probs[best] += 1.0 - eps;
    Ok(ActionDistribution { probs })
}

/// Affine map of `f` onto `[0, cap]`. A constant vector maps to zeros.
pub fn normalize_opt(f: &[f64], cap: f64) -> Vec<f64> {
    let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; f.len()];
    }
    f.iter().map(|&v| cap * (v - lo) / (hi - lo)).collect()
}

/// Numerically stable softmax restricted to the allowed actions.
pub fn masked_softmax(x: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let allowed = |i: usize| mask.map_or(true, |m| m[i]);
    let hi = x
        .iter()
        .enumerate()
        .filter(|&(i, _)| allowed(i))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| if allowed(i) { (v - hi).exp() } else { 0.0 })
        .collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    masked_softmax(x, None)
}

/// Greedy action (by `q`) with probability `1 − ε`; with probability `ε` a
/// draw from `softmax(f)`, where `f` is first normalized onto `[0, cap]`
/// when a cap is given.
pub fn optimistic_epsilon_greedy_dist(
    q: &[f64],
    f: &[f64],
    eps: f64,
    cap: Option<f64>,
) -> Result<ActionDistribution> {
    masked_optimistic_epsilon_greedy_dist(q, f, eps, cap, None)
}

pub fn masked_optimistic_epsilon_greedy_dist(
    q: &[f64],
    f: &[f64],
    eps: f64,
    cap: Option<f64>,
    mask: Option<&[bool]>,
) -> Result<ActionDistribution> {
    if q.is_empty() {
        return Err(Error::usage("no actions"));
    }
    if q.len() != f.len() {
        return Err(Error::usage(format!(
            "{} utilities but {} optimistic estimates",
            q.len(),
            f.len()
        )));
    }
    check_epsilon(eps)?;
    check_mask(q.len(), mask)?;
    let scores = match cap {
        Some(c) => {
            let allowed: Vec<f64> = f
                .iter()
                .enumerate()
                .filter(|&(i, _)| mask.map_or(true, |m| m[i]))
                .map(|(_, &v)| v)
                .collect();
            let lo = allowed.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = allowed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                f.iter().map(|&v| c * (v - lo) / (hi - lo)).collect()
            } else {
                vec![0.0; f.len()]
            }
        }
        None => f.to_vec(),
    };
    let soft = masked_softmax(&scores, mask);
    let best = masked_argmax(q, mask).expect("at least one allowed action");
    let mut probs: Vec<f64> = soft.iter().map(|p| eps * p).collect();
    probs[best] += 1.0 - eps;
    Ok(ActionDistribution { probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn schedule_points() {
        let s = LinearSchedule::new(1.0, 0.05, 200_000);
        assert_eq!(anneal(&s, 0), 1.0);
        assert_eq!(anneal(&s, 200_000), 0.05);
        assert_eq!(anneal(&s, 10_000_000), 0.05);
        assert!((anneal(&s, 100_000) - 0.525).abs() < 1e-12);
    }

    #[test]
    fn greedy_cases() {
        let d = epsilon_greedy_dist(&[1.0, 5.0, 2.0], 0.0).unwrap();
        assert_eq!(d.probs, vec![0.0, 1.0, 0.0]);
        let d = epsilon_greedy_dist(&[1.0, 5.0, 2.0], 1.0).unwrap();
        assert!(close(&d.probs, &[1.0 / 3.0; 3]));
        let d = epsilon_greedy_dist(&[1.0, 5.0, 2.0], 0.3).unwrap();
        assert!(close(&d.probs, &[0.1, 0.8, 0.1]));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[2.0, 3.0, 3.0]), Some(1));
        let d = epsilon_greedy_dist(&[0.0, 0.0], 0.0).unwrap();
        assert_eq!(d.probs, vec![1.0, 0.0]);
    }

    #[test]
    fn empty_q_is_usage_error() {
        assert!(matches!(epsilon_greedy_dist(&[], 0.1), Err(Error::Usage(_))));
    }

    #[test]
    fn normalization_cases() {
        assert_eq!(normalize_opt(&[2.0, 2.0, 2.0], 5.0), vec![0.0; 3]);
        assert_eq!(normalize_opt(&[0.0, 10.0], 2.0), vec![0.0, 2.0]);
        assert_eq!(normalize_opt(&[-4.0, 7.0, 1.0], 0.0), vec![0.0; 3]);
    }

    #[test]
    fn zero_cap_explores_uniformly() {
        let d = optimistic_epsilon_greedy_dist(&[0.0, 0.0, 0.0], &[9.0, -3.0, 1.0], 1.0, Some(0.0))
            .unwrap();
        assert!(close(&d.probs, &[1.0 / 3.0; 3]));
    }

    #[test]
    fn optimistic_reduces_to_plain_for_constant_f() {
        let d = optimistic_epsilon_greedy_dist(&[1.0, 5.0, 2.0], &[4.0; 3], 0.3, None).unwrap();
        assert!(close(&d.probs, &[0.1, 0.8, 0.1]));
        let d = optimistic_epsilon_greedy_dist(&[1.0, 5.0, 2.0], &[4.0; 3], 0.0, Some(2.0)).unwrap();
        assert_eq!(d.probs, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn masking() {
        let mask = [true, false, true];
        let d = masked_optimistic_epsilon_greedy_dist(
            &[0.0, 9.0, 1.0],
            &[0.0, 50.0, 0.0],
            0.5,
            None,
            Some(&mask),
        )
        .unwrap();
        assert_eq!(d.probs[1], 0.0);
        assert!(close(&d.probs, &[0.25, 0.0, 0.75]));
        let d = masked_epsilon_greedy_dist(&[0.0, 9.0, 1.0], 0.5, Some(&mask)).unwrap();
        assert!(close(&d.probs, &[0.25, 0.0, 0.75]));
        let none = [false; 3];
        assert!(matches!(
            masked_optimistic_epsilon_greedy_dist(&[0.0; 3], &[0.0; 3], 0.1, None, Some(&none)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn sampler_respects_zero_mass() {
        let d = ActionDistribution {
            probs: vec![0.0, 1.0, 0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| d.sample(&mut rng) == 1));
    }

    proptest! {
        #[test]
        fn distributions_are_normalized(
            q in prop::collection::vec(-50.0f64..50.0, 1..10),
            seed in any::<u64>(),
            eps in 0.0f64..=1.0,
            cap in prop::option::of(0.0f64..5.0),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<f64> = q.iter().map(|_| rand::Rng::gen_range(&mut rng, -50.0..50.0)).collect();
            for d in [
                epsilon_greedy_dist(&q, eps).unwrap(),
                optimistic_epsilon_greedy_dist(&q, &f, eps, cap).unwrap(),
            ] {
                prop_assert!(d.probs.iter().all(|&p| p >= 0.0));
                prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn softmax_floor_at_maximum(f in prop::collection::vec(-100.0f64..100.0, 1..12)) {
            let best = argmax(&f).unwrap();
            let p = softmax(&f);
            prop_assert!(p[best] >= 1.0 / f.len() as f64 - 1e-12);
        }
    }
}
