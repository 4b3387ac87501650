//! Cooperative environments: a shared team reward, global state for
//! centralized training, and local observations for decentralized execution.

mod matrix;
mod predprey;

pub use matrix::{MatrixGame, PAYOFF};
pub use predprey::{predprey_reset, Action, PredPreyConfig, PredatorPrey, StepEvents};

use crate::error::Result;

/// Snapshot of an environment after reset or a step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub state: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub avail_actions: Vec<Vec<bool>>,
    pub step: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next: EnvState,
    pub done: bool,
}

pub trait Environment: Send {
    fn n_agents(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    /// Upper bound on steps per episode.
    fn episode_limit(&self) -> usize;

    fn reset(&mut self) -> EnvState;

    /// Advances one step with one action index per agent. Stepping a
    /// finished episode is a usage error.
    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome>;

    /// Whether an episode achieved the environment's success condition
    /// (optimal joint action, all prey captured).
    fn is_success(&self, episode_return: f64) -> bool;
}
