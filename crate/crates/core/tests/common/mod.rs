//! Independent oracles shared by the integration suites and the acceptance
//! harness.
#![allow(dead_code)]

use std::collections::HashMap;

use ndarray::Array2;
use optmarl::diffcore::{gru_step, Dense, Graph, GruParams, Matrix, NodeId, ParamId, ParameterStore};
use optmarl::exploration::{epsilon_greedy_dist, optimistic_epsilon_greedy_dist};
use optmarl::networks::{AgentNet, AgentNetBundle, Dims, JointCritic, Mixer, MixerKind};
use optmarl::optimistic::{closed_form_after_n, LowerBoundScalar, OptimisticScalar};
use optmarl::training::{compute_losses, compute_targets, Batch, EpisodeRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// A differentiable test case: builds a scalar loss from graph inputs
/// and returns it together with the input nodes.
pub type Build<'a> = dyn Fn(&mut Graph, &[Matrix]) -> (NodeId, Vec<NodeId>) + 'a;

/// Two step sizes: the larger one keeps rounding error small, the smaller
/// one keeps the stencil off nearby ReLU/abs kinks. An entry passes if
/// either estimate agrees.
const FD_STEPS: [f64; 2] = [1e-4, 1e-6];

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Fourth-order central differences of `f` at `x`, one per step size.
fn five_point(mut f: impl FnMut(f64) -> f64, x: f64) -> [f64; 2] {
    FD_STEPS.map(|h| {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    })
}

fn best_err(ana: f64, num: [f64; 2]) -> f64 {
    num.iter().map(|&n| rel_err(ana, n)).fold(f64::INFINITY, f64::min)
}

fn eval(store: &ParameterStore, inputs: &[Matrix], build: &Build) -> f64 {
    let mut g = Graph::new(store);
    let (loss, _) = build(&mut g, inputs);
    g.scalar(loss)
}

/// Largest relative difference between reverse-mode gradients and central
/// differences over every parameter and input entry.
pub fn gradient_check(store: &ParameterStore, inputs: &[Matrix], build: &Build) -> f64 {
    let mut g = Graph::new(store);
    let (loss, input_nodes) = build(&mut g, inputs);
    let grads = g.backward(loss).expect("scalar loss");
    let analytic: HashMap<ParamId, Matrix> =
        grads.params().map(|(p, m)| (p, m.clone())).collect();
    let input_grads: Vec<Option<Matrix>> =
        input_nodes.iter().map(|&n| grads.wrt(n).cloned()).collect();
    drop(g);

    let mut worst: f64 = 0.0;
    let mut s = store.clone();
    let ids: Vec<ParamId> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let (r, c) = store.value(id).dim();
        for i in 0..r {
            for j in 0..c {
                let orig = store.value(id)[[i, j]];
                let num = five_point(|v| {
                    s.value_mut(id)[[i, j]] = v;
                    eval(&s, inputs, build)
                }, orig);
                s.value_mut(id)[[i, j]] = orig;
                let ana = analytic.get(&id).map_or(0.0, |m| m[[i, j]]);
                worst = worst.max(best_err(ana, num));
            }
        }
    }
    let mut x = inputs.to_vec();
    for (k, ig) in input_grads.iter().enumerate() {
        let (r, c) = inputs[k].dim();
        for i in 0..r {
            for j in 0..c {
                let orig = inputs[k][[i, j]];
                let num = five_point(|v| {
                    x[k][[i, j]] = v;
                    eval(store, &x, build)
                }, orig);
                x[k][[i, j]] = orig;
                let ana = ig.as_ref().map_or(0.0, |m| m[[i, j]]);
                worst = worst.max(best_err(ana, num));
            }
        }
    }
    worst
}

/// Random linear read-out so every output entry gets a distinct weight.
pub fn project(g: &mut Graph, y: NodeId, seed: u64) -> NodeId {
    let (r, c) = g.shape(y);
    let w = random_matrix(&mut rng(seed ^ 0x5eed), r, c);
    let p = g.mul_const(y, w).unwrap();
    g.sum_all(p)
}

pub fn small_dims(rng: &mut ChaCha8Rng) -> Dims {
    Dims {
        n_agents: rng.gen_range(2..4),
        n_actions: rng.gen_range(2..5),
        obs_dim: rng.gen_range(2..5),
        state_dim: rng.gen_range(2..5),
        hidden: rng.gen_range(3..6),
        embed: rng.gen_range(2..5),
        critic_feature: rng.gen_range(2..4),
    }
}

/// Random episode for networks of shape `d`, `len` steps long.
pub fn random_episode(rng: &mut ChaCha8Rng, d: &Dims, len: usize) -> EpisodeRecord {
    let mut ep = EpisodeRecord::default();
    for t in 0..len {
        ep.states.push((0..d.state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
        ep.observations.push(
            (0..d.n_agents)
                .map(|_| (0..d.obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        );
        ep.avail_actions.push(vec![vec![true; d.n_actions]; d.n_agents]);
        ep.actions
            .push((0..d.n_agents).map(|_| rng.gen_range(0..d.n_actions)).collect());
        ep.rewards.push(rng.gen_range(-2.0..2.0));
        ep.dones.push(t + 1 == len);
    }
    ep
}

/// Live-parameter loss of a small opt-qmix batch, targets from the target
/// copy (constants with respect to the live parameters).
pub fn loss_case(seed: u64) -> (AgentNetBundle, Vec<EpisodeRecord>) {
    let mut r = rng(seed);
    let d = small_dims(&mut r);
    let mut bundle = AgentNetBundle::new(d, MixerKind::Qmix, true, &mut r).unwrap();
    for p in bundle.target.iter_mut() {
        p.value.mapv_inplace(|v| v * 0.9);
    }
    let eps = (0..3).map(|k| random_episode(&mut r, &d, 1 + k)).collect();
    (bundle, eps)
}

pub fn loss_value(bundle: &AgentNetBundle, eps: &[EpisodeRecord], w: f64, g: &mut Graph) -> NodeId {
    let batch = Batch::new(eps.iter().collect()).unwrap();
    let y = compute_targets(&bundle.nets, &bundle.target, &batch, 0.9).unwrap();
    compute_losses(g, &bundle.nets, &batch, &y, w).unwrap().0
}

/// QMIX mixer over random weights, checked for monotonicity in every
/// utility and for agreement of the joint argmax with the per-agent argmax.
/// Returns (monotonicity violations, argmax violations).
pub fn igm_trial(seed: u64) -> (usize, usize) {
    let mut r = rng(seed);
    let mut store = ParameterStore::new();
    let state_dim = 3;
    let mixer = Mixer::qmix(&mut store, "mixer", 2, state_dim, 8, &mut r).unwrap();
    for p in store.iter_mut() {
        p.value.mapv_inplace(|v| v * 3.0);
    }
    let state: Vec<f64> = (0..state_dim).map(|_| r.gen_range(-2.0..2.0)).collect();
    let q = random_matrix(&mut r, 2, 3).mapv(|v| v * 10.0);

    let mut g = Graph::new(&store);
    let joint = Array2::from_shape_fn((9, 2), |(k, i)| q[[i, if i == 0 { k / 3 } else { k % 3 }]]);
    let qn = g.input(joint);
    let s = g.input(Array2::from_shape_fn((9, state_dim), |(_, j)| state[j]));
    let tot = mixer.mix(&mut g, qn, s).unwrap();
    let total = g.sum_all(tot);
    let grads = g.backward(total).unwrap();
    let dq = grads.wrt(qn).unwrap();
    let mono = dq.iter().filter(|&&v| v < -1e-9).count();

    let tv = g.value(tot);
    let mut best = 0;
    for k in 1..9 {
        if tv[[k, 0]] > tv[[best, 0]] {
            best = k;
        }
    }
    let local = |i: usize| {
        let mut b = 0;
        for a in 1..3 {
            if q[[i, a]] > q[[i, b]] {
                b = a;
            }
        }
        b
    };
    let igm = usize::from(best != local(0) * 3 + local(1));
    (mono, igm)
}

/// Draws random (q, f, ε, |A|) and counts cases where the optimistic rule
/// gives the optimistic argmax less probability than plain ε-greedy.
pub fn theorem2_violations(draws: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..draws {
        let n = r.gen_range(1..=10);
        let q: Vec<f64> = (0..n).map(|_| r.gen_range(-20.0..20.0)).collect();
        let f: Vec<f64> = (0..n).map(|_| r.gen_range(-20.0..20.0)).collect();
        let eps = r.gen_range(0.0..=1.0);
        let cap = match r.gen_range(0..3) {
            0 => None,
            1 => Some(0.0),
            _ => Some(r.gen_range(0.0..5.0)),
        };
        let mut a_star = 0;
        for a in 1..n {
            if f[a] > f[a_star] {
                a_star = a;
            }
        }
        let opt = optimistic_epsilon_greedy_dist(&q, &f, eps, cap).unwrap();
        let plain = epsilon_greedy_dist(&q, eps).unwrap();
        if opt.probs[a_star] < plain.probs[a_star] - 1e-12 {
            bad += 1;
        }
    }
    bad
}

/// Both lemmas over `streams` random reward streams with exact comparisons.
/// Returns the number of violated steps.
pub fn lemma_violations(streams: usize, len: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..streams {
        let r_max = r.gen_range(0..10) as f64;
        let alpha = r.gen_range(0.0..=1.0);
        let f0 = r_max - r.gen_range(0.0..20.0);
        let mut f = OptimisticScalar::new(f0, alpha);
        let mut lb = LowerBoundScalar::new(f0, alpha, r_max);
        let mut running_max = f0;
        for _ in 0..len {
            let x: f64 = if r.gen_bool(0.3) { r_max } else { r_max - r.gen_range(0..25) as f64 };
            running_max = running_max.max(x);
            f = f.update(x);
            lb = lb.update(x);
            if f.value > running_max || f.value > r_max || f.value < lb.value {
                bad += 1;
            }
        }
    }
    bad
}

/// Largest gap between iterating the lower-bound update `n` times at
/// `r_max` and its closed form.
pub fn closed_form_gap(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let r_max = r.gen_range(-10.0..10.0);
        let f0 = r_max - r.gen_range(0.0..20.0);
        let alpha = r.gen_range(0.0..=1.0);
        let n = r.gen_range(0..200u32);
        let mut lb = LowerBoundScalar::new(f0, alpha, r_max);
        for _ in 0..n {
            lb = lb.update(r_max);
        }
        worst = worst.max((lb.value - closed_form_after_n(f0, r_max, alpha, n)).abs());
    }
    worst
}

/// Pearson χ² statistic of observed counts against probabilities, over
/// cells with positive probability. Returns (statistic, degrees of freedom).
pub fn chi_square(counts: &[u64], probs: &[f64]) -> (f64, usize) {
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&c, &p) in counts.iter().zip(probs) {
        if p > 0.0 {
            let e = p * total as f64;
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            assert_eq!(c, 0, "sampled an impossible action");
        }
    }
    (stat, cells.saturating_sub(1))
}

pub fn chi_square_critical(df: usize, level: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - level)
}

pub const FAMILIES: [&str; 8] = [
    "graph ops",
    "dense",
    "gru (3 steps)",
    "agent net (3 steps)",
    "qmix mixer",
    "vdn mixer",
    "joint critic",
    "combined loss",
];

/// Worst relative error of one random instance of a network family.
pub fn gradient_instance(family: &str, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut store = ParameterStore::new();
    match family {
        "graph ops" => {
            let inputs = vec![random_matrix(&mut r, 3, 4), random_matrix(&mut r, 3, 4)];
            let build = |g: &mut Graph, x: &[Matrix]| {
                let a = g.input(x[0].clone());
                let b = g.input(x[1].clone());
                let s = g.sigmoid(a);
                let t = g.tanh(b);
                let m = g.mul(s, t).unwrap();
                let e = g.elu(b);
                let ab = g.abs(a);
                let sq = g.square(e);
                let d = g.sub(m, sq).unwrap();
                let d = g.add(d, ab).unwrap();
                let d = g.affine(d, 1.7, -0.2);
                let rl = g.relu(d);
                let sl = g.slice_cols(rl, 1, 2).unwrap();
                let cc = g.concat_cols(&[sl, m]).unwrap();
                let rs = g.reshape(cc, 6, 3).unwrap();
                let ga = g.gather(rs, &[0, 2, 1, 1, 0, 2]).unwrap();
                let w = g.reshape(m, 3, 4).unwrap();
                let q = g.slice_cols(e, 0, 2).unwrap();
                let bv = g.batch_vecmat(q, w, 2).unwrap();
                let sc = g.sum_cols(bv);
                let l1 = project(g, ga, 1);
                let l2 = project(g, sc, 2);
                (g.add(l1, l2).unwrap(), vec![a, b])
            };
            gradient_check(&store, &inputs, &build)
        }
        "dense" => {
            let (i, o) = (r.gen_range(1..6), r.gen_range(1..6));
            let layer = Dense::new(&mut store, "d", i, o, &mut r).unwrap();
            let inputs = vec![random_matrix(&mut r, 4, i)];
            let build = move |g: &mut Graph, x: &[Matrix]| {
                let xi = g.input(x[0].clone());
                let y = layer.forward(g, xi).unwrap();
                (project(g, y, seed), vec![xi])
            };
            gradient_check(&store, &inputs, &build)
        }
        "gru (3 steps)" => {
            let (i, h) = (r.gen_range(1..5), r.gen_range(1..5));
            let p = GruParams::new(&mut store, "g", i, h, &mut r).unwrap();
            let mut inputs: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut r, 3, i)).collect();
            inputs.push(random_matrix(&mut r, 3, h));
            let build = move |g: &mut Graph, x: &[Matrix]| {
                let xs: Vec<NodeId> = x.iter().map(|m| g.input(m.clone())).collect();
                let mut hid = xs[3];
                for &xt in &xs[..3] {
                    hid = gru_step(g, xt, hid, &p).unwrap();
                }
                (project(g, hid, seed), xs)
            };
            gradient_check(&store, &inputs, &build)
        }
        "agent net (3 steps)" => {
            let d = small_dims(&mut r);
            let net = AgentNet::new(&mut store, "a", d.agent_input(), d.hidden, d.n_actions, &mut r)
                .unwrap();
            let inputs: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut r, 2, d.agent_input())).collect();
            let build = move |g: &mut Graph, x: &[Matrix]| {
                let xs: Vec<NodeId> = x.iter().map(|m| g.input(m.clone())).collect();
                let mut h = g.input(Array2::zeros((2, d.hidden)));
                let mut total = None;
                for (t, &xt) in xs.iter().enumerate() {
                    let (q, h1) = net.forward(g, xt, h).unwrap();
                    h = h1;
                    let l = project(g, q, seed + t as u64);
                    total = Some(match total {
                        Some(acc) => g.add(acc, l).unwrap(),
                        None => l,
                    });
                }
                (total.unwrap(), xs)
            };
            gradient_check(&store, &inputs, &build)
        }
        "qmix mixer" => {
            let (n, s, e) = (r.gen_range(2..4), r.gen_range(1..4), r.gen_range(2..5));
            let mixer = Mixer::qmix(&mut store, "m", n, s, e, &mut r).unwrap();
            let inputs = vec![random_matrix(&mut r, 3, n), random_matrix(&mut r, 3, s)];
            let build = move |g: &mut Graph, x: &[Matrix]| {
                let q = g.input(x[0].clone());
                let st = g.input(x[1].clone());
                let y = mixer.mix(g, q, st).unwrap();
                (project(g, y, seed), vec![q, st])
            };
            gradient_check(&store, &inputs, &build)
        }
        "vdn mixer" => {
            let n = r.gen_range(2..5);
            let inputs = vec![random_matrix(&mut r, 3, n), random_matrix(&mut r, 3, 2)];
            let build = move |g: &mut Graph, x: &[Matrix]| {
                let q = g.input(x[0].clone());
                let st = g.input(x[1].clone());
                let y = Mixer::Vdn.mix(g, q, st).unwrap();
                (project(g, y, seed), vec![q])
            };
            gradient_check(&store, &inputs, &build)
        }
        "joint critic" => {
            let d = small_dims(&mut r);
            let c = JointCritic::new(
                &mut store,
                "c",
                d.agent_input(),
                d.state_dim,
                d.n_agents,
                d.n_actions,
                d.hidden,
                d.critic_feature,
                &mut r,
            )
            .unwrap();
            let b = 2;
            let actions: Vec<usize> = (0..b * d.n_agents).map(|_| r.gen_range(0..d.n_actions)).collect();
            let inputs = vec![
                random_matrix(&mut r, b * d.n_agents, d.agent_input()),
                random_matrix(&mut r, b * d.n_agents, d.agent_input()),
                random_matrix(&mut r, b, d.state_dim),
            ];
            let build = move |g: &mut Graph, x: &[Matrix]| {
                let xs: Vec<NodeId> = x.iter().map(|m| g.input(m.clone())).collect();
                let h0 = g.input(Array2::zeros((b * d.n_agents, d.hidden)));
                let h1 = c.advance(g, xs[0], h0).unwrap();
                let h2 = c.advance(g, xs[1], h1).unwrap();
                let y = c.evaluate(g, h2, &actions, xs[2]).unwrap();
                (project(g, y, seed), xs)
            };
            gradient_check(&store, &inputs, &build)
        }
        "combined loss" => {
            let (bundle, eps) = loss_case(seed);
            let w = r.gen_range(0.0..1.0);
            let build = |g: &mut Graph, _: &[Matrix]| (loss_value(&bundle, &eps, w, g), vec![]);
            gradient_check(&bundle.live, &[], &build)
        }
        other => panic!("unknown family {other}"),
    }
}
