use super::{EnvState, Environment, StepOutcome};
use crate::error::{Error, Result};

/// Team payoff indexed by `[agent 0 action][agent 1 action]`.
pub const PAYOFF: [[f64; 3]; 3] = [
    [8.0, -12.0, -12.0],
    [-12.0, 0.0, 0.0],
    [-12.0, 0.0, 0.0],
];

/// One-step two-agent game where the optimal joint action is surrounded by
/// heavy penalties. State and observations are the constant vector `[1]`.
#[derive(Debug, Clone, Default)]
pub struct MatrixGame {
    done: bool,
}

impl MatrixGame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn payoff(a0: usize, a1: usize) -> f64 {
        PAYOFF[a0][a1]
    }

    fn snapshot(&self, step: usize) -> EnvState {
        EnvState {
            state: vec![1.0],
            observations: vec![vec![1.0]; 2],
            avail_actions: vec![vec![true; 3]; 2],
            step,
            done: self.done,
        }
    }
}

impl Environment for MatrixGame {
    fn n_agents(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn episode_limit(&self) -> usize {
        1
    }

    fn reset(&mut self) -> EnvState {
        self.done = false;
        self.snapshot(0)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if actions.len() != 2 {
            return Err(Error::config(
                "n_agents",
                format!("matrix game takes 2 actions, got {}", actions.len()),
            ));
        }
        if self.done {
            return Err(Error::usage("episode already finished"));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= 3) {
            return Err(Error::usage(format!("action {a} out of range 0..3")));
        }
        self.done = true;
        Ok(StepOutcome {
            reward: Self::payoff(actions[0], actions[1]),
            next: self.snapshot(1),
            done: true,
        })
    }

    fn is_success(&self, episode_return: f64) -> bool {
        episode_return >= PAYOFF[0][0]
    }
}
