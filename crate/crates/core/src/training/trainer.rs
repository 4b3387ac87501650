use std::fmt::Write as _;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::learner::{Learner, LossReport};
use super::replay::{EpisodeRecord, ReplayBuffer};
use crate::config::{Algo, EnvName, RunConfig};
use crate::diffcore::{Graph, RmsProp};
use crate::envs::{Environment, MatrixGame, PredatorPrey};
use crate::error::Result;
use crate::exploration::{
    masked_argmax, masked_epsilon_greedy_dist, masked_optimistic_epsilon_greedy_dist,
    LinearSchedule,
};
use crate::networks::{
    agent_input_rows, opt_input_rows, state_rows, AgentNetBundle, Dims, MixerKind,
};

/// Independent random streams derived from one run seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const ENV: u64 = 1;
    pub const EVAL_ENV: u64 = 2;
    pub const ACT: u64 = 3;
    pub const SAMPLE: u64 = 4;
    pub const EVAL: u64 = 5;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    rand::Rng::gen(&mut stream_rng(seed, stream))
}

pub fn make_env(cfg: &RunConfig, seed: u64) -> Result<Box<dyn Environment>> {
    Ok(match cfg.env {
        EnvName::Matrix => Box::new(MatrixGame::new()),
        EnvName::PredPrey => Box::new(PredatorPrey::new(cfg.predprey.clone(), seed)?),
    })
}

/// How actions are chosen during a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Greedy,
    EpsilonGreedy { eps: f64 },
    Optimistic { eps: f64, cap: Option<f64> },
}

/// Plays one episode with the live agent network.
pub fn rollout(
    env: &mut dyn Environment,
    bundle: &AgentNetBundle,
    policy: Policy,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeRecord> {
    let nets = &bundle.nets;
    let d = nets.dims;
    let opt_net = match policy {
        Policy::Optimistic { .. } => Some(nets.opt.ok_or_else(|| {
            crate::Error::config("algo", "optimistic exploration needs the optimistic network")
        })?),
        _ => None,
    };
    let mut ep = EpisodeRecord::default();
    let mut s = env.reset();
    let mut h = Array2::zeros((d.n_agents, d.hidden));
    let mut h_opt = Array2::zeros((d.n_agents, d.hidden));
    loop {
        let mut g = Graph::new(&bundle.live);
        let x = g.input(agent_input_rows(&[&s.observations], &d));
        let h0 = g.input(h);
        let (q, h1) = nets.agent.forward(&mut g, x, h0)?;
        h = g.value(h1).clone();
        let f = match opt_net {
            Some(net) => {
                let xo = g.input(opt_input_rows(&[&s.state], &[&s.observations], &d));
                let ho = g.input(h_opt);
                let (f, ho1) = net.forward(&mut g, xo, ho)?;
                h_opt = g.value(ho1).clone();
                Some(g.value(f).clone())
            }
            None => None,
        };
        let qv = g.value(q);
        let mut actions = Vec::with_capacity(d.n_agents);
        for i in 0..d.n_agents {
            let qi = qv.row(i).to_vec();
            let mask = Some(s.avail_actions[i].as_slice());
            let a = match policy {
                Policy::Greedy => masked_argmax(&qi, mask).unwrap_or(0),
                Policy::EpsilonGreedy { eps } => {
                    masked_epsilon_greedy_dist(&qi, eps, mask)?.sample(rng)
                }
                Policy::Optimistic { eps, cap } => {
                    let fi = f.as_ref().expect("computed above").row(i).to_vec();
                    masked_optimistic_epsilon_greedy_dist(&qi, &fi, eps, cap, mask)?.sample(rng)
                }
            };
            actions.push(a);
        }
        let out = env.step(&actions)?;
        ep.states.push(std::mem::take(&mut s.state));
        ep.observations.push(std::mem::take(&mut s.observations));
        ep.avail_actions.push(std::mem::take(&mut s.avail_actions));
        ep.actions.push(actions);
        ep.rewards.push(out.reward);
        ep.dones.push(out.done);
        if out.done {
            return Ok(ep);
        }
        s = out.next;
    }
}

/// `Q_tot` of the matrix game for every joint action, indexed
/// `[agent 0][agent 1]`, from the live networks.
pub fn matrix_q_table(bundle: &AgentNetBundle) -> Result<[[f64; 3]; 3]> {
    let d = bundle.nets.dims;
    let mut g = Graph::new(&bundle.live);
    let obs = vec![vec![1.0]; 2];
    let x = g.input(agent_input_rows(&[&obs], &d));
    let h = g.input(Array2::zeros((2, d.hidden)));
    let (q, _) = bundle.nets.agent.forward(&mut g, x, h)?;
    let qv = g.value(q).clone();
    let chosen = g.input(Array2::from_shape_fn((9, 2), |(k, i)| {
        let a = if i == 0 { k / 3 } else { k % 3 };
        qv[[i, a]]
    }));
    let one = [1.0];
    let state = g.input(state_rows(&[&one[..]; 9]));
    let tot = bundle.nets.mixer.mix(&mut g, chosen, state)?;
    let tv = g.value(tot);
    let mut table = [[0.0; 3]; 3];
    for (k, v) in tv.iter().enumerate() {
        table[k / 3][k % 3] = *v;
    }
    Ok(table)
}

/// Per-agent greedy actions of the matrix game.
pub fn matrix_greedy(bundle: &AgentNetBundle) -> Result<(usize, usize)> {
    let mut env = MatrixGame::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ep = rollout(&mut env, bundle, Policy::Greedy, &mut rng)?;
    Ok((ep.actions[0][0], ep.actions[0][1]))
}

pub fn q_table_csv(table: &[[f64; 3]; 3]) -> String {
    let mut s = String::from("a0,a1=0,a1=1,a1=2\n");
    for (i, row) in table.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{}", row[0], row[1], row[2]);
    }
    s
}

/// One line of the metrics CSV. Loss columns average the training steps
/// since the previous row and are NaN before training starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub episode: usize,
    pub eval_mean_return: f64,
    pub eval_win_or_optimal_rate: f64,
    pub l_td: f64,
    pub l_opt: f64,
    pub l_jt: f64,
    pub epsilon: f64,
    /// NaN when optimistic estimates are not normalized.
    pub optnorm_cap: f64,
}

pub const METRICS_HEADER: [&str; 9] = [
    "step",
    "episode",
    "eval_mean_return",
    "eval_win_or_optimal_rate",
    "L_td",
    "L_opt",
    "L_jt",
    "epsilon",
    "optnorm_cap",
];

impl MetricsRow {
    pub fn fields(&self) -> [String; 9] {
        [
            self.step.to_string(),
            self.episode.to_string(),
            self.eval_mean_return.to_string(),
            self.eval_win_or_optimal_rate.to_string(),
            self.l_td.to_string(),
            self.l_opt.to_string(),
            self.l_jt.to_string(),
            self.epsilon.to_string(),
            self.optnorm_cap.to_string(),
        ]
    }
}

#[derive(Debug, Default)]
struct LossMeans {
    sum: [f64; 3],
    n: usize,
}

impl LossMeans {
    fn add(&mut self, r: &LossReport) {
        self.sum[0] += r.l_td;
        self.sum[1] += r.l_opt;
        self.sum[2] += r.l_jt;
        self.n += 1;
    }

    fn take(&mut self) -> [f64; 3] {
        let out = if self.n == 0 {
            [f64::NAN; 3]
        } else {
            self.sum.map(|s| s / self.n as f64)
        };
        *self = LossMeans::default();
        out
    }
}

/// Greedy evaluation summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub mean_return: f64,
    pub success_rate: f64,
}

/// Sequential rollout/learn loop of one seeded run.
pub struct Trainer {
    pub cfg: RunConfig,
    env: Box<dyn Environment>,
    eval_env: Box<dyn Environment>,
    pub learner: Learner,
    pub buffer: ReplayBuffer,
    act_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    pub t_env: usize,
    pub episodes: usize,
    eps: LinearSchedule,
    cap: Option<LinearSchedule>,
    losses: LossMeans,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let env = make_env(&cfg, stream_seed(cfg.seed, streams::ENV))?;
        let eval_env = make_env(&cfg, stream_seed(cfg.seed, streams::EVAL_ENV))?;
        let dims = Dims {
            n_agents: env.n_agents(),
            n_actions: env.n_actions(),
            obs_dim: env.obs_dim(),
            state_dim: env.state_dim(),
            hidden: cfg.hidden_dim,
            embed: cfg.mixer_embed,
            critic_feature: cfg.critic_feature_dim,
        };
        let mixer = if cfg.algo == Algo::Vdn { MixerKind::Vdn } else { MixerKind::Qmix };
        let mut init = stream_rng(cfg.seed, streams::INIT);
        let bundle = AgentNetBundle::new(dims, mixer, cfg.algo.is_optimistic(), &mut init)?;
        let learner = Learner {
            bundle,
            optimizer: RmsProp::new(cfg.lr, cfg.rms_decay, cfg.rms_eps),
            gamma: cfg.gamma,
            w: cfg.w,
            grad_clip: cfg.grad_clip,
            target_update_interval: cfg.target_update_interval,
            train_steps: 0,
        };
        Ok(Trainer {
            env,
            eval_env,
            learner,
            buffer: ReplayBuffer::new(cfg.buffer_size),
            act_rng: stream_rng(cfg.seed, streams::ACT),
            sample_rng: stream_rng(cfg.seed, streams::SAMPLE),
            eval_rng: stream_rng(cfg.seed, streams::EVAL),
            t_env: 0,
            episodes: 0,
            eps: LinearSchedule::new(cfg.eps_start, cfg.eps_end, cfg.eps_horizon),
            cap: cfg
                .optnorm_cap_end
                .map(|c| LinearSchedule::new(0.0, c, cfg.optnorm_horizon)),
            losses: LossMeans::default(),
            cfg,
        })
    }

    pub fn bundle(&self) -> &AgentNetBundle {
        &self.learner.bundle
    }

    pub fn epsilon(&self) -> f64 {
        self.eps.value(self.t_env)
    }

    /// Current normalization cap; `None` when uncapped or not optimistic.
    pub fn optnorm_cap(&self) -> Option<f64> {
        if !self.cfg.algo.is_optimistic() {
            return None;
        }
        self.cap.map(|c| c.value(self.t_env))
    }

    pub fn exploration_policy(&self) -> Policy {
        let eps = self.epsilon();
        if self.cfg.algo.is_optimistic() {
            Policy::Optimistic { eps, cap: self.optnorm_cap() }
        } else {
            Policy::EpsilonGreedy { eps }
        }
    }

    /// Collects one exploring episode, stores it, and trains when due.
    /// Returns the training report if an optimizer step was taken.
    pub fn step_episode(&mut self) -> Result<Option<LossReport>> {
        let policy = self.exploration_policy();
        let ep = rollout(self.env.as_mut(), &self.learner.bundle, policy, &mut self.act_rng)?;
        self.t_env += ep.len();
        self.episodes += 1;
        self.buffer.insert(ep);
        if self.episodes % self.cfg.train_interval != 0 || self.buffer.len() < self.cfg.batch_size
        {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.sample_rng)?;
        let report = self.learner.train_on(batch)?;
        self.losses.add(&report);
        Ok(Some(report))
    }

    pub fn evaluate(&mut self) -> Result<EvalResult> {
        let n = self.cfg.eval_episodes.max(1);
        let (mut total, mut wins) = (0.0, 0usize);
        for _ in 0..n {
            let ep = rollout(
                self.eval_env.as_mut(),
                &self.learner.bundle,
                Policy::Greedy,
                &mut self.eval_rng,
            )?;
            let ret = ep.episode_return();
            total += ret;
            wins += usize::from(self.eval_env.is_success(ret));
        }
        Ok(EvalResult {
            mean_return: total / n as f64,
            success_rate: wins as f64 / n as f64,
        })
    }

    fn metrics_row(&mut self) -> Result<MetricsRow> {
        let eval = self.evaluate()?;
        let [l_td, l_opt, l_jt] = self.losses.take();
        Ok(MetricsRow {
            step: self.t_env,
            episode: self.episodes,
            eval_mean_return: eval.mean_return,
            eval_win_or_optimal_rate: eval.success_rate,
            l_td,
            l_opt,
            l_jt,
            epsilon: self.epsilon(),
            optnorm_cap: self.optnorm_cap().unwrap_or(f64::NAN),
        })
    }

    /// Trains until `cfg.steps` environment steps have been taken, emitting
    /// a metrics row at step 0, after every `eval_interval` steps, and at
    /// the end.
    pub fn run(&mut self, mut sink: impl FnMut(&MetricsRow) -> Result<()>) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        let mut next_eval = self.t_env;
        while self.t_env < self.cfg.steps {
            if self.t_env >= next_eval {
                let row = self.metrics_row()?;
                sink(&row)?;
                rows.push(row);
                next_eval = (self.t_env / self.cfg.eval_interval + 1) * self.cfg.eval_interval;
            }
            self.step_episode()?;
        }
        let row = self.metrics_row()?;
        sink(&row)?;
        rows.push(row);
        Ok(rows)
    }
}
