//! Group Relative Policy Optimization over a Gaussian waypoint policy.
//!
//! The policy emits waypoints directly, so its format reward is always 1; the
//! text-format gate is exercised by [`crate::rfs::combined_reward`] instead.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod objective;
pub mod policy;
pub mod train;

use thiserror::Error;

use crate::rfs::RfsError;

pub use checkpoint::Checkpoint;
pub use config::GrpoConfig;
pub use gradcheck::{finite_diff_check, max_relative_error, toy_instance, GradCheckReport};
pub use objective::{
    collect_groups, group_advantages, grpo_loss_and_grad, kl_estimate, sample_rollouts,
    surrogate_loss, surrogate_loss_and_grad, LossAndGrad, LossStats, Rollout, RolloutGroup,
};
pub use policy::{policy_context, PolicyParams, PolicyShape};
pub use train::{evaluate_policy, metrics_to_csv, train, EvalSummary, MetricsRow, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid policy shape: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("frame {0} has no rated trajectories")]
    MissingRaters(String),
    #[error("no training frames")]
    NoFrames,
    #[error("training diverged at step {step}: {reason}")]
    Diverged {
        step: usize,
        reason: String,
        last_good: Box<Checkpoint>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Reward(#[from] RfsError),
}
