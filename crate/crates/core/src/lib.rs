//! Cooperative multi-agent Q-learning with value decomposition (VDN, QMIX)
//! and optimistic epsilon-greedy exploration.

pub mod cli;
pub mod config;
pub mod diffcore;
pub mod envs;
pub mod error;
pub mod exploration;
pub mod networks;
pub mod optimistic;
pub mod training;

pub use error::{Error, Result};
