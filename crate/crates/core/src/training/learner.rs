use ndarray::Array2;

use super::replay::EpisodeRecord;
use crate::diffcore::{Graph, Matrix, NodeId, ParameterStore, RmsProp};
use crate::error::{Error, Result};
use crate::exploration::masked_argmax;
use crate::networks::{agent_input_rows, opt_input_rows, state_rows, AgentNetBundle, Networks};

/// Episodes padded to the longest one. Steps past an episode's end repeat
/// its last step and are excluded by the mask.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub episodes: Vec<&'a EpisodeRecord>,
    pub max_len: usize,
}

impl<'a> Batch<'a> {
    pub fn new(episodes: Vec<&'a EpisodeRecord>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        for ep in &episodes {
            ep.validate()?;
        }
        let max_len = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
        Ok(Batch { episodes, max_len })
    }

    pub fn size(&self) -> usize {
        self.episodes.len()
    }

    fn clamp(&self, b: usize, t: usize) -> usize {
        t.min(self.episodes[b].len() - 1)
    }

    pub fn valid(&self, b: usize, t: usize) -> bool {
        t < self.episodes[b].len()
    }

    /// Number of unpadded steps in the batch.
    pub fn count(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    pub fn mask(&self, t: usize) -> Matrix {
        Array2::from_shape_fn((self.size(), 1), |(b, _)| f64::from(u8::from(self.valid(b, t))))
    }

    pub fn states(&self, t: usize) -> Vec<&[f64]> {
        (0..self.size())
            .map(|b| self.episodes[b].states[self.clamp(b, t)].as_slice())
            .collect()
    }

    pub fn observations(&self, t: usize) -> Vec<&[Vec<f64>]> {
        (0..self.size())
            .map(|b| self.episodes[b].observations[self.clamp(b, t)].as_slice())
            .collect()
    }

    /// Joint actions flattened agent-minor.
    pub fn actions(&self, t: usize) -> Vec<usize> {
        (0..self.size())
            .flat_map(|b| self.episodes[b].actions[self.clamp(b, t)].iter().copied())
            .collect()
    }

    pub fn avail(&self, t: usize) -> Vec<&[bool]> {
        (0..self.size())
            .flat_map(|b| {
                self.episodes[b].avail_actions[self.clamp(b, t)]
                    .iter()
                    .map(Vec::as_slice)
            })
            .collect()
    }
}

fn row_argmax(q: &Matrix, avail: &[&[bool]]) -> Vec<usize> {
    q.outer_iter()
        .zip(avail)
        .map(|(row, m)| {
            let v: Vec<f64> = row.to_vec();
            masked_argmax(&v, Some(m)).unwrap_or(0)
        })
        .collect()
}

/// Bootstrap targets `y[t][b]` computed with the target parameters.
///
/// The next joint action is the per-agent argmax of the target utilities.
/// With a joint critic the bootstrap value is `Q_jt(s', o', â*)`; otherwise
/// it is the target mixer's `Q_tot(s', â*)`. Terminal steps use `y = r`;
/// padded steps get 0.
pub fn compute_targets(
    nets: &Networks,
    target: &ParameterStore,
    batch: &Batch,
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    let d = nets.dims;
    let bsz = batch.size();
    let mut h = Array2::zeros((bsz * d.n_agents, d.hidden));
    let mut hc = Array2::zeros((bsz * d.n_agents, d.hidden));
    let mut values = vec![vec![0.0; bsz]; batch.max_len];
    for (t, v_t) in values.iter_mut().enumerate() {
        let mut g = Graph::new(target);
        let x = g.input(agent_input_rows(&batch.observations(t), &d));
        let h0 = g.input(h);
        let (q, h1) = nets.agent.forward(&mut g, x, h0)?;
        let state = g.input(state_rows(&batch.states(t)));
        let greedy = row_argmax(g.value(q), &batch.avail(t));
        let value = match &nets.critic {
            Some(critic) => {
                let hc0 = g.input(hc);
                let hc1 = critic.advance(&mut g, x, hc0)?;
                hc = g.value(hc1).clone();
                critic.evaluate(&mut g, hc1, &greedy, state)?
            }
            None => {
                let chosen = g.gather(q, &greedy)?;
                let chosen = g.reshape(chosen, bsz, d.n_agents)?;
                nets.mixer.mix(&mut g, chosen, state)?
            }
        };
        h = g.value(h1).clone();
        v_t.copy_from_slice(g.value(value).as_slice().expect("contiguous column"));
    }

    let mut y = vec![vec![0.0; bsz]; batch.max_len];
    for (b, ep) in batch.episodes.iter().enumerate() {
        for t in 0..ep.len() {
            let boot = if ep.dones[t] { 0.0 } else { values[t + 1][b] };
            y[t][b] = ep.rewards[t] + gamma * boot;
        }
    }
    Ok(y)
}

/// Batch losses. `L_opt` and `L_jt` are zero for runs without the
/// optimistic components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub l_td: f64,
    pub l_opt: f64,
    pub l_jt: f64,
    pub l: f64,
    pub mean_q_tot: f64,
    pub mean_f_tot: f64,
    pub mean_q_jt: f64,
}

fn masked_sum(v: &Matrix, mask: &Matrix) -> f64 {
    v.iter().zip(mask.iter()).map(|(a, m)| a * m).sum()
}

fn column(values: &[f64]) -> Matrix {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column")
}

/// Squared error against constant targets, weighted per row, summed.
fn weighted_sq_sum(g: &mut Graph, pred: NodeId, y: &Matrix, weights: Matrix) -> Result<NodeId> {
    let y = g.input(y.clone());
    let diff = g.sub(pred, y)?;
    let sq = g.square(diff);
    let weighted = g.mul_const(sq, weights)?;
    Ok(g.sum_all(weighted))
}

fn accumulate(g: &mut Graph, total: Option<NodeId>, term: NodeId) -> Result<Option<NodeId>> {
    Ok(Some(match total {
        Some(acc) => g.add(acc, term)?,
        None => term,
    }))
}

/// Builds the combined loss on the live parameters. Targets enter as
/// constants. Returns the loss node and its report.
pub fn compute_losses(
    g: &mut Graph,
    nets: &Networks,
    batch: &Batch,
    targets: &[Vec<f64>],
    w: f64,
) -> Result<(NodeId, LossReport)> {
    let d = nets.dims;
    let bsz = batch.size();
    if targets.len() != batch.max_len || targets.iter().any(|y| y.len() != bsz) {
        return Err(Error::usage("targets do not match the batch layout"));
    }
    let optimistic = nets.opt.is_some() && nets.critic.is_some();
    let zeros = || Array2::zeros((bsz * d.n_agents, d.hidden));
    let mut h = g.input(zeros());
    let mut h_opt = g.input(zeros());
    let mut h_jt = g.input(zeros());
    let (mut td, mut opt, mut jt) = (None, None, None);
    let mut rep = LossReport::default();

    for (t, y_t) in targets.iter().enumerate() {
        let mask = batch.mask(t);
        let y = column(y_t);
        let obs = batch.observations(t);
        let states = batch.states(t);
        let actions = batch.actions(t);
        let x = g.input(agent_input_rows(&obs, &d));
        let state = g.input(state_rows(&states));

        let (q, h1) = nets.agent.forward(g, x, h)?;
        h = h1;
        let chosen = g.gather(q, &actions)?;
        let chosen = g.reshape(chosen, bsz, d.n_agents)?;
        let q_tot = nets.mixer.mix(g, chosen, state)?;
        rep.mean_q_tot += masked_sum(g.value(q_tot), &mask);
        let term = weighted_sq_sum(g, q_tot, &y, mask.clone())?;
        td = accumulate(g, td, term)?;

        if !optimistic {
            continue;
        }
        let (opt_net, critic) = (nets.opt.expect("checked"), nets.critic.expect("checked"));
        let xo = g.input(opt_input_rows(&states, &obs, &d));
        let (f, h1) = opt_net.forward(g, xo, h_opt)?;
        h_opt = h1;
        let f_chosen = g.gather(f, &actions)?;
        let f_chosen = g.reshape(f_chosen, bsz, d.n_agents)?;
        let f_tot = g.sum_cols(f_chosen);
        let fv = g.value(f_tot);
        rep.mean_f_tot += masked_sum(fv, &mask);
        let weights = Array2::from_shape_fn((bsz, 1), |(b, _)| {
            let wt = if y[[b, 0]] > fv[[b, 0]] { 1.0 } else { w };
            wt * mask[[b, 0]]
        });
        let term = weighted_sq_sum(g, f_tot, &y, weights)?;
        opt = accumulate(g, opt, term)?;

        h_jt = critic.advance(g, x, h_jt)?;
        let q_jt = critic.evaluate(g, h_jt, &actions, state)?;
        rep.mean_q_jt += masked_sum(g.value(q_jt), &mask);
        let term = weighted_sq_sum(g, q_jt, &y, mask)?;
        jt = accumulate(g, jt, term)?;
    }

    let inv = 1.0 / batch.count() as f64;
    let td = g.affine(td.expect("non-empty batch"), inv, 0.0);
    rep.l_td = g.scalar(td);
    rep.mean_q_tot *= inv;
    let loss = if optimistic {
        let opt = g.affine(opt.expect("non-empty batch"), inv, 0.0);
        let jt = g.affine(jt.expect("non-empty batch"), inv, 0.0);
        rep.l_opt = g.scalar(opt);
        rep.l_jt = g.scalar(jt);
        rep.mean_f_tot *= inv;
        rep.mean_q_jt *= inv;
        let sum = g.add(td, opt)?;
        g.add(sum, jt)?
    } else {
        td
    };
    rep.l = g.scalar(loss);
    Ok((loss, rep))
}

/// Optimizer state and the live/target parameter pair.
#[derive(Debug, Clone)]
pub struct Learner {
    pub bundle: AgentNetBundle,
    pub optimizer: RmsProp,
    pub gamma: f64,
    pub w: f64,
    pub grad_clip: f64,
    pub target_update_interval: usize,
    pub train_steps: usize,
}

impl Learner {
    /// One optimizer step on a batch of episodes. Refreshes the target
    /// copy every `target_update_interval` steps.
    pub fn train_on(&mut self, episodes: Vec<&EpisodeRecord>) -> Result<LossReport> {
        let batch = Batch::new(episodes)?;
        let nets = self.bundle.nets;
        let targets = compute_targets(&nets, &self.bundle.target, &batch, self.gamma)?;
        let (grads, report) = {
            let mut g = Graph::new(&self.bundle.live);
            let (loss, report) = compute_losses(&mut g, &nets, &batch, &targets, self.w)?;
            (g.backward(loss)?, report)
        };
        self.bundle.live.accumulate(&grads);
        self.bundle.live.clip_grad_norm(self.grad_clip);
        self.optimizer.step(&mut self.bundle.live);
        self.train_steps += 1;
        if self.train_steps % self.target_update_interval == 0 {
            self.bundle.target_sync()?;
        }
        Ok(report)
    }
}
