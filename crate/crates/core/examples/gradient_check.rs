//! Compares reverse-mode gradients of a GRU agent network with central
//! finite differences.

use ndarray::Array2;
use optmarl::diffcore::{Graph, Matrix, ParamId, ParameterStore};
use optmarl::networks::AgentNet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(store: &ParameterStore, net: &AgentNet, xs: &[Matrix]) -> (f64, Vec<(ParamId, Matrix)>) {
    let mut g = Graph::new(store);
    let mut h = g.input(Array2::zeros((xs[0].nrows(), net.hidden_dim())));
    let mut total = None;
    for x in xs {
        let xi = g.input(x.clone());
        let (q, h1) = net.forward(&mut g, xi, h).unwrap();
        h = h1;
        let sq = g.square(q);
        let s = g.sum_all(sq);
        total = Some(match total {
            Some(t) => g.add(t, s).unwrap(),
            None => s,
        });
    }
    let total = total.unwrap();
    let value = g.scalar(total);
    let grads = g.backward(total).unwrap();
    (value, grads.params().map(|(p, m)| (p, m.clone())).collect())
}

fn main() -> optmarl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParameterStore::new();
    let net = AgentNet::new(&mut store, "agent", 4, 5, 3, &mut rng)?;
    let xs: Vec<Matrix> = (0..3)
        .map(|_| Array2::from_shape_fn((2, 4), |_| rng.gen_range(-1.0..1.0)))
        .collect();

    let (_, analytic) = loss(&store, &net, &xs);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (id, grad) in analytic {
        let name = store.get(id).name.clone();
        let mut layer_worst: f64 = 0.0;
        for ((i, j), &a) in grad.indexed_iter() {
            let orig = store.value(id)[[i, j]];
            store.value_mut(id)[[i, j]] = orig + h;
            let up = loss(&store, &net, &xs).0;
            store.value_mut(id)[[i, j]] = orig - h;
            let down = loss(&store, &net, &xs).0;
            store.value_mut(id)[[i, j]] = orig;
            let n = (up - down) / (2.0 * h);
            layer_worst = layer_worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
        }
        println!("{name:16} max relative error {layer_worst:.2e}");
        worst = worst.max(layer_worst);
    }
    println!("overall {worst:.2e}");
    Ok(())
}
