use ndarray::Zip;

use super::params::ParameterStore;

/// RMSProp without momentum:
/// `acc ← decay·acc + (1−decay)·g²`, `θ ← θ − lr·g/√(acc + eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp {
            lr: 5e-4,
            decay: 0.99,
            eps: 1e-5,
        }
    }
}

impl RmsProp {
    pub fn new(lr: f64, decay: f64, eps: f64) -> Self {
        RmsProp { lr, decay, eps }
    }

    /// Applies one update to every entry and zeroes the gradients.
    pub fn step(&self, store: &mut ParameterStore) {
        let (lr, decay, eps) = (self.lr, self.decay, self.eps);
        for p in store.iter_mut() {
            Zip::from(&mut p.value)
                .and(&mut p.sq_avg)
                .and(&mut p.grad)
                .for_each(|v, acc, g| {
                    *acc = decay * *acc + (1.0 - decay) * *g * *g;
                    *v -= lr * *g / (*acc + eps).sqrt();
                    *g = 0.0;
                });
        }
    }
}
