use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvState, Environment, StepOutcome};
use crate::config::{FlatConfig, KeyValues};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
    Capture,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
        Action::Capture,
    ];

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay | Action::Capture => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredPreyConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    pub n_predators: usize,
    pub n_prey: usize,
    pub capture_reward: f64,
    pub punishment: f64,
    pub step_reward: f64,
    pub horizon: usize,
    pub obs_window: usize,
    /// Probability that an unengaged prey attempts a random move each step.
    pub prey_move_prob: f64,
}

impl Default for PredPreyConfig {
    fn default() -> Self {
        PredPreyConfig {
            grid_w: 7,
            grid_h: 7,
            n_predators: 4,
            n_prey: 2,
            capture_reward: 10.0,
            punishment: -2.0,
            step_reward: 0.0,
            horizon: 60,
            obs_window: 2,
            prey_move_prob: 1.0,
        }
    }
}

impl PredPreyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_w == 0 || self.grid_h == 0 {
            return Err(Error::config("grid_w", "grid dimensions must be positive"));
        }
        if self.n_predators == 0 {
            return Err(Error::config("n_predators", "need at least one predator"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be positive"));
        }
        if self.n_predators + self.n_prey > self.grid_w * self.grid_h {
            return Err(Error::config(
                "n_prey",
                format!(
                    "{} entities do not fit on a {}x{} grid",
                    self.n_predators + self.n_prey,
                    self.grid_w,
                    self.grid_h
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.prey_move_prob) {
            return Err(Error::config("prey_move_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn window_side(&self) -> usize {
        2 * self.obs_window + 1
    }

    pub fn obs_dim(&self) -> usize {
        self.window_side() * self.window_side() * 3 + Action::COUNT
    }

    pub fn state_dim(&self) -> usize {
        2 * self.grid_w * self.grid_h
    }
}

impl FlatConfig for PredPreyConfig {
    fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("grid_w", self.grid_w);
        kv.set("grid_h", self.grid_h);
        kv.set("n_predators", self.n_predators);
        kv.set("n_prey", self.n_prey);
        kv.set("capture_reward", self.capture_reward);
        kv.set("punishment", self.punishment);
        kv.set("step_reward", self.step_reward);
        kv.set("horizon", self.horizon);
        kv.set("obs_window", self.obs_window);
        kv.set("prey_move_prob", self.prey_move_prob);
        kv
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        use crate::config::parse_value as p;
        match key {
            "grid_w" => self.grid_w = p(key, value)?,
            "grid_h" => self.grid_h = p(key, value)?,
            "n_predators" => self.n_predators = p(key, value)?,
            "n_prey" => self.n_prey = p(key, value)?,
            "capture_reward" => self.capture_reward = p(key, value)?,
            "punishment" => self.punishment = p(key, value)?,
            "step_reward" => self.step_reward = p(key, value)?,
            "horizon" => self.horizon = p(key, value)?,
            "obs_window" => self.obs_window = p(key, value)?,
            "prey_move_prob" => self.prey_move_prob = p(key, value)?,
            _ => return Err(Error::config(key, "unknown predator-prey key")),
        }
        Ok(())
    }
}

type Pos = (usize, usize);

/// What happened during the last step, for reward accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepEvents {
    pub captures: usize,
    pub escapes: usize,
}

/// Gridworld where predators must capture prey in pairs. A capture attempted
/// by a single adjacent predator fails and costs the team `punishment`.
///
/// Step order: predators move (index order, blocked by walls and occupied
/// cells), then captures resolve, then the remaining prey wander.
#[derive(Debug, Clone)]
pub struct PredatorPrey {
    cfg: PredPreyConfig,
    rng: ChaCha8Rng,
    predators: Vec<Pos>,
    /// `None` once captured.
    prey: Vec<Option<Pos>>,
    last_actions: Vec<Option<usize>>,
    t: usize,
    done: bool,
    events: StepEvents,
}

impl PredatorPrey {
    pub fn new(cfg: PredPreyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(PredatorPrey {
            predators: Vec::new(),
            prey: Vec::new(),
            last_actions: vec![None; cfg.n_predators],
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
            t: 0,
            done: true,
            events: StepEvents::default(),
        })
    }

    pub fn config(&self) -> &PredPreyConfig {
        &self.cfg
    }

    pub fn predators(&self) -> &[Pos] {
        &self.predators
    }

    pub fn prey(&self) -> impl Iterator<Item = Pos> + '_ {
        self.prey.iter().flatten().copied()
    }

    pub fn prey_remaining(&self) -> usize {
        self.prey.iter().flatten().count()
    }

    pub fn last_events(&self) -> StepEvents {
        self.events
    }

    /// Places entities explicitly instead of sampling. Used to build
    /// specific scenarios.
    pub fn set_positions(&mut self, predators: &[Pos], prey: &[Pos]) -> Result<()> {
        if predators.len() != self.cfg.n_predators {
            return Err(Error::config("n_predators", "position count mismatch"));
        }
        let mut all: Vec<Pos> = predators.iter().chain(prey).copied().collect();
        if all
            .iter()
            .any(|&(r, c)| r >= self.cfg.grid_h || c >= self.cfg.grid_w)
        {
            return Err(Error::usage("position outside the grid"));
        }
        all.sort_unstable();
        all.dedup();
        if all.len() != predators.len() + prey.len() {
            return Err(Error::usage("overlapping positions"));
        }
        self.predators = predators.to_vec();
        self.prey = prey.iter().map(|&p| Some(p)).collect();
        self.last_actions = vec![None; self.cfg.n_predators];
        self.t = 0;
        self.done = self.prey.is_empty();
        Ok(())
    }

    fn occupied(&self, p: Pos) -> bool {
        self.predators.contains(&p) || self.prey.iter().flatten().any(|&q| q == p)
    }

    fn shifted(&self, (r, c): Pos, (dr, dc): (isize, isize)) -> Option<Pos> {
        let r = r as isize + dr;
        let c = c as isize + dc;
        if r < 0 || c < 0 || r >= self.cfg.grid_h as isize || c >= self.cfg.grid_w as isize {
            None
        } else {
            Some((r as usize, c as usize))
        }
    }

    fn adjacent(a: Pos, b: Pos) -> bool {
        a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1
    }

    pub fn snapshot(&self) -> EnvState {
        let n = self.cfg.n_predators;
        EnvState {
            state: self.global_state(),
            observations: (0..n).map(|i| self.observe(i)).collect(),
            avail_actions: vec![vec![true; Action::COUNT]; n],
            step: self.t,
            done: self.done,
        }
    }

    /// Two channels per cell, predator then prey, row-major.
    pub fn global_state(&self) -> Vec<f64> {
        let (w, h) = (self.cfg.grid_w, self.cfg.grid_h);
        let mut s = vec![0.0; 2 * w * h];
        for &(r, c) in &self.predators {
            s[2 * (r * w + c)] = 1.0;
        }
        for (r, c) in self.prey() {
            s[2 * (r * w + c) + 1] = 1.0;
        }
        s
    }

    /// Local view of predator `agent`: a (2k+1)² window with channels
    /// {predator, prey, wall} per cell, followed by the agent's last action
    /// one-hot (all zero before its first action).
    pub fn observe(&self, agent: usize) -> Vec<f64> {
        let side = self.cfg.window_side();
        let k = self.cfg.obs_window as isize;
        let mut o = vec![0.0; self.cfg.obs_dim()];
        let me = self.predators[agent];
        for dr in -k..=k {
            for dc in -k..=k {
                let cell = ((dr + k) as usize * side + (dc + k) as usize) * 3;
                match self.shifted(me, (dr, dc)) {
                    None => o[cell + 2] = 1.0,
                    Some(p) => {
                        if self.predators.contains(&p) {
                            o[cell] = 1.0;
                        }
                        if self.prey.iter().flatten().any(|&q| q == p) {
                            o[cell + 1] = 1.0;
                        }
                    }
                }
            }
        }
        if let Some(a) = self.last_actions[agent] {
            o[side * side * 3 + a] = 1.0;
        }
        o
    }
}

impl Environment for PredatorPrey {
    fn n_agents(&self) -> usize {
        self.cfg.n_predators
    }

    fn n_actions(&self) -> usize {
        Action::COUNT
    }

    fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }

    fn state_dim(&self) -> usize {
        self.cfg.state_dim()
    }

    fn episode_limit(&self) -> usize {
        self.cfg.horizon
    }

    fn reset(&mut self) -> EnvState {
        let (np, nq) = (self.cfg.n_predators, self.cfg.n_prey);
        let w = self.cfg.grid_w;
        let cells = sample(&mut self.rng, w * self.cfg.grid_h, np + nq);
        let pos: Vec<Pos> = cells.iter().map(|i| (i / w, i % w)).collect();
        self.predators = pos[..np].to_vec();
        self.prey = pos[np..].iter().map(|&p| Some(p)).collect();
        self.last_actions = vec![None; np];
        self.t = 0;
        self.done = nq == 0;
        self.events = StepEvents::default();
        self.snapshot()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if actions.len() != self.cfg.n_predators {
            return Err(Error::config(
                "n_predators",
                format!(
                    "expected {} actions, got {}",
                    self.cfg.n_predators,
                    actions.len()
                ),
            ));
        }
        if self.done {
            return Err(Error::usage("episode already finished"));
        }
        let acts: Vec<Action> = actions
            .iter()
            .map(|&a| {
                Action::from_index(a)
                    .ok_or_else(|| Error::usage(format!("action {a} out of range 0..6")))
            })
            .collect::<Result<_>>()?;

        for (i, a) in acts.iter().enumerate() {
            if let Some(target) = self.shifted(self.predators[i], a.delta()) {
                if target != self.predators[i] && !self.occupied(target) {
                    self.predators[i] = target;
                }
            }
        }

        let mut reward = self.cfg.step_reward;
        let mut events = StepEvents::default();
        let mut engaged = vec![false; self.prey.len()];
        for (j, slot) in self.prey.iter_mut().enumerate() {
            let Some(q) = *slot else { continue };
            let hunters = self
                .predators
                .iter()
                .zip(&acts)
                .filter(|(&p, &a)| a == Action::Capture && Self::adjacent(p, q))
                .count();
            match hunters {
                0 => {}
                1 => {
                    reward += self.cfg.punishment;
                    events.escapes += 1;
                    engaged[j] = true;
                }
                _ => {
                    reward += self.cfg.capture_reward;
                    events.captures += 1;
                    *slot = None;
                }
            }
        }

        for j in 0..self.prey.len() {
            let Some(q) = self.prey[j] else { continue };
            if engaged[j] || !self.rng.gen_bool(self.cfg.prey_move_prob) {
                continue;
            }
            let free: Vec<Pos> = [Action::Up, Action::Down, Action::Left, Action::Right]
                .iter()
                .filter_map(|a| self.shifted(q, a.delta()))
                .filter(|&p| !self.occupied(p))
                .collect();
            if let Some(&p) = free.choose(&mut self.rng) {
                self.prey[j] = Some(p);
            }
        }

        for (slot, &a) in self.last_actions.iter_mut().zip(actions) {
            *slot = Some(a);
        }
        self.t += 1;
        self.events = events;
        self.done = self.t >= self.cfg.horizon || self.prey_remaining() == 0;
        Ok(StepOutcome {
            reward,
            next: self.snapshot(),
            done: self.done,
        })
    }

    fn is_success(&self, _episode_return: f64) -> bool {
        self.prey_remaining() == 0
    }
}

/// Resets a fresh environment seeded with `seed`.
pub fn predprey_reset(cfg: PredPreyConfig, seed: u64) -> Result<(PredatorPrey, EnvState)> {
    let mut env = PredatorPrey::new(cfg, seed)?;
    let s = env.reset();
    Ok((env, s))
}
