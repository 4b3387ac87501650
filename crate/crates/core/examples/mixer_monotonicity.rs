//! A QMIX mixer keeps ∂Q_tot/∂q_i ≥ 0 for arbitrary hypernetwork weights,
//! so the joint greedy action is the per-agent greedy one.

use ndarray::Array2;
use optmarl::diffcore::{Graph, ParameterStore};
use optmarl::networks::Mixer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> optmarl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParameterStore::new();
    let mixer = Mixer::qmix(&mut store, "mixer", 2, 3, 8, &mut rng)?;

    let q = Array2::from_shape_fn((2, 3), |_| rng.gen_range(-10.0..10.0));
    let joint = Array2::from_shape_fn((9, 2), |(k, i)| q[[i, if i == 0 { k / 3 } else { k % 3 }]]);
    let state = Array2::from_shape_fn((9, 3), |(_, j)| [0.5, -1.0, 2.0][j]);

    let mut g = Graph::new(&store);
    let qn = g.input(joint);
    let s = g.input(state);
    let tot = mixer.mix(&mut g, qn, s)?;
    let sum = g.sum_all(tot);
    let grads = g.backward(sum)?;

    let min_slope = grads.wrt(qn).unwrap().iter().copied().fold(f64::INFINITY, f64::min);
    println!("smallest dQ_tot/dq_i over all joint actions: {min_slope:.4}");
    let v = g.value(tot);
    for a in 0..3 {
        println!("  {}", (0..3).map(|b| format!("{:8.3}", v[[a * 3 + b, 0]])).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
