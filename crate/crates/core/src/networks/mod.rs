//! Per-agent utility and optimistic networks, the VDN/QMIX mixers, and the
//! unconstrained joint critic, all built on [`crate::diffcore`].
//!
//! Batches are laid out agent-minor: row `b·n + i` holds agent `i` of
//! sample `b`. Agents share parameters and see a one-hot of their index
//! appended to their input.

mod checkpoint;

pub use checkpoint::{load_checkpoint_into, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

use ndarray::Array2;
use rand::Rng;

use crate::diffcore::{gru_step, Dense, Graph, GruParams, Matrix, NodeId, ParameterStore};
use crate::error::{Error, Result};

/// MLP → GRU → MLP producing one value per action.
#[derive(Debug, Clone, Copy)]
pub struct AgentNet {
    pub fc1: Dense,
    pub gru: GruParams,
    pub fc2: Dense,
}

/// Same shape as [`AgentNet`]; its input is `[state, observation, id]`.
pub type OptNet = AgentNet;

impl AgentNet {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        hidden: usize,
        n_actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(AgentNet {
            fc1: Dense::new(store, &format!("{name}.fc1"), input, hidden, rng)?,
            gru: GruParams::new(store, &format!("{name}.gru"), hidden, hidden, rng)?,
            fc2: Dense::new(store, &format!("{name}.fc2"), hidden, n_actions, rng)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.fc1.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden
    }

    pub fn n_actions(&self) -> usize {
        self.fc2.output
    }

    /// One recurrent step: returns (utilities rows×|A|, next hidden).
    pub fn forward(&self, g: &mut Graph, x: NodeId, hidden: NodeId) -> Result<(NodeId, NodeId)> {
        if g.shape(hidden).1 != self.hidden_dim() {
            return Err(Error::config(
                "hidden_dim",
                format!("hidden width {} != {}", g.shape(hidden).1, self.hidden_dim()),
            ));
        }
        let a = self.fc1.forward(g, x)?;
        let a = g.relu(a);
        let h = gru_step(g, a, hidden, &self.gru)?;
        let q = self.fc2.forward(g, h)?;
        Ok((q, h))
    }
}

/// Sum of per-agent estimates, as used for the optimistic total.
pub fn f_total(g: &mut Graph, per_agent: NodeId) -> NodeId {
    g.sum_cols(per_agent)
}

/// Hypernetworks mapping the global state to nonnegative mixing weights.
#[derive(Debug, Clone, Copy)]
pub struct QmixParams {
    pub hyper_w1: Dense,
    pub hyper_b1: Dense,
    pub hyper_w2: Dense,
    pub value1: Dense,
    pub value2: Dense,
    pub n_agents: usize,
    pub embed: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum Mixer {
    Vdn,
    Qmix(QmixParams),
}

impl Mixer {
    pub fn qmix<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        n_agents: usize,
        state_dim: usize,
        embed: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Mixer::Qmix(QmixParams {
            hyper_w1: Dense::new(store, &format!("{name}.hyper_w1"), state_dim, n_agents * embed, rng)?,
            hyper_b1: Dense::new(store, &format!("{name}.hyper_b1"), state_dim, embed, rng)?,
            hyper_w2: Dense::new(store, &format!("{name}.hyper_w2"), state_dim, embed, rng)?,
            value1: Dense::new(store, &format!("{name}.value1"), state_dim, embed, rng)?,
            value2: Dense::new(store, &format!("{name}.value2"), embed, 1, rng)?,
            n_agents,
            embed,
        }))
    }

    /// Mixes per-agent utilities `q` (B×n) into `Q_tot` (B×1). QMIX
    /// conditions its weights on `state` (B×S); VDN ignores it.
    pub fn mix(&self, g: &mut Graph, q: NodeId, state: NodeId) -> Result<NodeId> {
        match self {
            Mixer::Vdn => Ok(g.sum_cols(q)),
            Mixer::Qmix(p) => {
                let (b, n) = g.shape(q);
                if n != p.n_agents || g.shape(state).0 != b {
                    return Err(Error::config(
                        "n_agents",
                        format!("mixer expects {} agents, got {b}x{n}", p.n_agents),
                    ));
                }
                let w1 = p.hyper_w1.forward(g, state)?;
                let w1 = g.abs(w1);
                let b1 = p.hyper_b1.forward(g, state)?;
                let hidden = g.batch_vecmat(q, w1, p.embed)?;
                let hidden = g.add(hidden, b1)?;
                let hidden = g.elu(hidden);
                let w2 = p.hyper_w2.forward(g, state)?;
                let w2 = g.abs(w2);
                let weighted = g.mul(hidden, w2)?;
                let y = g.sum_cols(weighted);
                let v = p.value1.forward(g, state)?;
                let v = g.relu(v);
                let v = p.value2.forward(g, v)?;
                g.add(y, v)
            }
        }
    }
}

/// Unconstrained `Q_jt(s, o, a)`: per-agent MLP → GRU feature extractors
/// (shared parameters) whose post-GRU layer also sees the agent's action,
/// concatenated with the state and passed through a two-layer head.
///
/// The recurrent state depends only on observations, so a bootstrap value
/// for an alternative joint action reuses the same hidden state.
#[derive(Debug, Clone, Copy)]
pub struct JointCritic {
    pub fc1: Dense,
    pub gru: GruParams,
    pub fc2: Dense,
    pub head1: Dense,
    pub head2: Dense,
    pub n_agents: usize,
    pub n_actions: usize,
    pub feature: usize,
}

impl JointCritic {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        state_dim: usize,
        n_agents: usize,
        n_actions: usize,
        hidden: usize,
        feature: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(JointCritic {
            fc1: Dense::new(store, &format!("{name}.fc1"), input, hidden, rng)?,
            gru: GruParams::new(store, &format!("{name}.gru"), hidden, hidden, rng)?,
            fc2: Dense::new(store, &format!("{name}.fc2"), hidden + n_actions, feature, rng)?,
            head1: Dense::new(store, &format!("{name}.head1"), n_agents * feature + state_dim, hidden, rng)?,
            head2: Dense::new(store, &format!("{name}.head2"), hidden, 1, rng)?,
            n_agents,
            n_actions,
            feature,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden
    }

    /// Advances the per-agent recurrent state on observation rows.
    pub fn advance(&self, g: &mut Graph, x: NodeId, hidden: NodeId) -> Result<NodeId> {
        let a = self.fc1.forward(g, x)?;
        let a = g.relu(a);
        gru_step(g, a, hidden, &self.gru)
    }

    /// Scores a joint action (one index per row of `hidden`) in `state`.
    pub fn evaluate(
        &self,
        g: &mut Graph,
        hidden: NodeId,
        actions: &[usize],
        state: NodeId,
    ) -> Result<NodeId> {
        let rows = g.shape(hidden).0;
        if actions.len() != rows || rows % self.n_agents != 0 {
            return Err(Error::config(
                "n_agents",
                format!("{} actions for {rows} agent rows", actions.len()),
            ));
        }
        let batch = rows / self.n_agents;
        if g.shape(state).0 != batch {
            return Err(Error::config("state_dim", "state rows do not match batch"));
        }
        let onehot = g.input(one_hot_rows(actions, self.n_actions)?);
        let x = g.concat_cols(&[hidden, onehot])?;
        let feat = self.fc2.forward(g, x)?;
        let feat = g.relu(feat);
        let feat = g.reshape(feat, batch, self.n_agents * self.feature)?;
        let z = g.concat_cols(&[feat, state])?;
        let z = self.head1.forward(g, z)?;
        let z = g.relu(z);
        self.head2.forward(g, z)
    }
}

pub fn one_hot_rows(idx: &[usize], width: usize) -> Result<Matrix> {
    let mut m = Array2::zeros((idx.len(), width));
    for (r, &i) in idx.iter().enumerate() {
        if i >= width {
            return Err(Error::usage(format!("index {i} out of {width}")));
        }
        m[[r, i]] = 1.0;
    }
    Ok(m)
}

/// Shapes shared by all networks of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub hidden: usize,
    pub embed: usize,
    pub critic_feature: usize,
}

impl Dims {
    pub fn agent_input(&self) -> usize {
        self.obs_dim + self.n_agents
    }

    pub fn opt_input(&self) -> usize {
        self.state_dim + self.obs_dim + self.n_agents
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerKind {
    Vdn,
    Qmix,
}

/// Parameter handles of every network in a run. The same handles address
/// the live store and its target copy.
#[derive(Debug, Clone, Copy)]
pub struct Networks {
    pub dims: Dims,
    pub agent: AgentNet,
    pub mixer: Mixer,
    pub opt: Option<OptNet>,
    pub critic: Option<JointCritic>,
}

/// Live parameters plus a frozen target copy with identical layout.
#[derive(Debug, Clone)]
pub struct AgentNetBundle {
    pub nets: Networks,
    pub live: ParameterStore,
    pub target: ParameterStore,
}

impl AgentNetBundle {
    pub fn new<R: Rng>(dims: Dims, mixer: MixerKind, optimistic: bool, rng: &mut R) -> Result<Self> {
        let mut s = ParameterStore::new();
        let agent = AgentNet::new(&mut s, "agent", dims.agent_input(), dims.hidden, dims.n_actions, rng)?;
        let mixer = match mixer {
            MixerKind::Vdn => Mixer::Vdn,
            MixerKind::Qmix => Mixer::qmix(&mut s, "mixer", dims.n_agents, dims.state_dim, dims.embed, rng)?,
        };
        let (opt, critic) = if optimistic {
            let opt = AgentNet::new(&mut s, "opt", dims.opt_input(), dims.hidden, dims.n_actions, rng)?;
            let critic = JointCritic::new(
                &mut s,
                "critic",
                dims.agent_input(),
                dims.state_dim,
                dims.n_agents,
                dims.n_actions,
                dims.hidden,
                dims.critic_feature,
                rng,
            )?;
            (Some(opt), Some(critic))
        } else {
            (None, None)
        };
        Ok(AgentNetBundle {
            nets: Networks {
                dims,
                agent,
                mixer,
                opt,
                critic,
            },
            target: s.clone(),
            live: s,
        })
    }

    /// Replaces target values by the live ones.
    pub fn target_sync(&mut self) -> Result<()> {
        self.target.copy_values_from(&self.live)
    }
}

/// Builds agent-network input rows `[obs, one_hot(i)]` for every sample and
/// agent, agent-minor.
pub fn agent_input_rows(obs: &[&[Vec<f64>]], dims: &Dims) -> Matrix {
    let n = dims.n_agents;
    let mut m = Array2::zeros((obs.len() * n, dims.agent_input()));
    for (b, per_agent) in obs.iter().enumerate() {
        for (i, o) in per_agent.iter().enumerate() {
            let r = b * n + i;
            for (j, &v) in o.iter().enumerate() {
                m[[r, j]] = v;
            }
            m[[r, dims.obs_dim + i]] = 1.0;
        }
    }
    m
}

/// Builds optimistic-network input rows `[state, obs, one_hot(i)]`.
pub fn opt_input_rows(states: &[&[f64]], obs: &[&[Vec<f64>]], dims: &Dims) -> Matrix {
    let n = dims.n_agents;
    let s = dims.state_dim;
    let mut m = Array2::zeros((obs.len() * n, dims.opt_input()));
    for (b, per_agent) in obs.iter().enumerate() {
        for (i, o) in per_agent.iter().enumerate() {
            let r = b * n + i;
            for (j, &v) in states[b].iter().enumerate() {
                m[[r, j]] = v;
            }
            for (j, &v) in o.iter().enumerate() {
                m[[r, s + j]] = v;
            }
            m[[r, s + dims.obs_dim + i]] = 1.0;
        }
    }
    m
}

pub fn state_rows(states: &[&[f64]]) -> Matrix {
    let cols = states.first().map_or(0, |s| s.len());
    let mut m = Array2::zeros((states.len(), cols));
    for (b, s) in states.iter().enumerate() {
        for (j, &v) in s.iter().enumerate() {
            m[[b, j]] = v;
        }
    }
    m
}
