//! Episode replay, bootstrap targets, the TD / optimistic / joint-critic
//! losses, and the rollout-then-learn loop.

mod learner;
mod replay;
mod trainer;

pub use learner::{compute_losses, compute_targets, Batch, Learner, LossReport};
pub use replay::{EpisodeRecord, ReplayBuffer};
pub use trainer::{
    make_env, matrix_greedy, matrix_q_table, q_table_csv, rollout, stream_rng, streams,
    EvalResult, MetricsRow, Policy, Trainer, METRICS_HEADER,
};
