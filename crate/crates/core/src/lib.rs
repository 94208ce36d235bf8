//! Trajectory scoring against rated references, strict model-output grammars,
//! spline upsampling of 1 Hz waypoints, and a GRPO trainer for a small
//! Gaussian waypoint policy, plus a seeded synthetic scenario generator.

pub mod exec;
pub mod grpo;
pub mod rfs;
pub mod schema;
pub mod synth;
pub mod traj;

pub use exec::Execution;
pub use traj::{Trajectory, Waypoint};
