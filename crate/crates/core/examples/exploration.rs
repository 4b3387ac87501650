//! Plain and optimistic ε-greedy action distributions side by side, and a
//! random search for states where the optimistic rule gives the most
//! optimistic action less mass than plain ε-greedy (there are none).

use optmarl::exploration::{epsilon_greedy_dist, optimistic_epsilon_greedy_dist, LinearSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> optmarl::Result<()> {
    let q = [0.0, 0.4, 0.2];
    let f = [8.0, -1.0, 0.0];
    let eps = LinearSchedule::new(1.0, 0.05, 200_000).value(50_000);
    println!("epsilon after 50k steps: {eps:.4}");
    println!("plain      {:.4?}", epsilon_greedy_dist(&q, eps)?.probs);
    for cap in [None, Some(0.0), Some(2.0)] {
        let d = optimistic_epsilon_greedy_dist(&q, &f, eps, cap)?;
        println!("cap {cap:?}  {:.4?}", d.probs);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worse = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=10);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let eps = rng.gen_range(0.0..=1.0);
        let best = (0..n).fold(0, |b, a| if f[a] > f[b] { a } else { b });
        let opt = optimistic_epsilon_greedy_dist(&q, &f, eps, None)?.probs[best];
        let plain = epsilon_greedy_dist(&q, eps)?.probs[best];
        worse += usize::from(opt < plain - 1e-12);
    }
    println!("draws where argmax f lost probability: {worse}");
    Ok(())
}
