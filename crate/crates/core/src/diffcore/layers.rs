use rand::Rng;

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParameterStore};
use crate::error::{Error, Result};

/// Affine layer `x·Wᵀ + b` with `W` stored as (out, in).
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.insert_uniform(format!("{name}.weight"), output, input, input, rng)?;
        let bias = store.insert_uniform(format!("{name}.bias"), 1, output, input, rng)?;
        Ok(Dense {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        dense_forward(g, x, w, b)
    }
}

/// `x·Wᵀ + b` for a batch of row vectors.
pub fn dense_forward(g: &mut Graph, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
    let xw = g.matmul_t(x, weight)?;
    g.add_row(xw, bias)
}

/// GRU cell parameters. Gate blocks are stacked in the order reset, update,
/// candidate, so `w_ih` is (3H, D), `w_hh` is (3H, H) and both biases are
/// (1, 3H).
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruParams {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h3 = 3 * hidden;
        Ok(GruParams {
            w_ih: store.insert_uniform(format!("{name}.w_ih"), h3, input, hidden, rng)?,
            w_hh: store.insert_uniform(format!("{name}.w_hh"), h3, hidden, hidden, rng)?,
            b_ih: store.insert_uniform(format!("{name}.b_ih"), 1, h3, hidden, rng)?,
            b_hh: store.insert_uniform(format!("{name}.b_hh"), 1, h3, hidden, rng)?,
            input,
            hidden,
        })
    }
}

/// One GRU recurrence:
/// `r = σ(Wᵢᵣx + bᵢᵣ + Wₕᵣh + bₕᵣ)`, `z = σ(Wᵢ𝓏x + bᵢ𝓏 + Wₕ𝓏h + bₕ𝓏)`,
/// `n = tanh(Wᵢₙx + bᵢₙ + r∘(Wₕₙh + bₕₙ))`, `h′ = (1−z)∘n + z∘h`.
pub fn gru_step(g: &mut Graph, x: NodeId, h: NodeId, p: &GruParams) -> Result<NodeId> {
    let hd = p.hidden;
    let (hr, hc) = g.shape(h);
    if hc != hd || g.shape(x).0 != hr {
        return Err(Error::shape(
            "gru_step",
            format!("hidden {hr}x{hc}, expected rows {} and width {hd}", g.shape(x).0),
        ));
    }
    let w_ih = g.param(p.w_ih);
    let w_hh = g.param(p.w_hh);
    let b_ih = g.param(p.b_ih);
    let b_hh = g.param(p.b_hh);
    let gi = dense_forward(g, x, w_ih, b_ih)?;
    let gh = dense_forward(g, h, w_hh, b_hh)?;

    let ir = g.slice_cols(gi, 0, hd)?;
    let hr_ = g.slice_cols(gh, 0, hd)?;
    let r_pre = g.add(ir, hr_)?;
    let r = g.sigmoid(r_pre);

    let iz = g.slice_cols(gi, hd, hd)?;
    let hz = g.slice_cols(gh, hd, hd)?;
    let z_pre = g.add(iz, hz)?;
    let z = g.sigmoid(z_pre);

    let in_ = g.slice_cols(gi, 2 * hd, hd)?;
    let hn = g.slice_cols(gh, 2 * hd, hd)?;
    let rhn = g.mul(r, hn)?;
    let n_pre = g.add(in_, rhn)?;
    let n = g.tanh(n_pre);

    // n + z∘(h − n)
    let h_minus_n = g.sub(h, n)?;
    let gated = g.mul(z, h_minus_n)?;
    g.add(n, gated)
}
