//! Runtime for long-horizon GUI-agent workflows replayed over screenshot
//! trajectories.
//!
//! An actor proposes one semantic action per step from the goal, the
//! current screen, grounding evidence and two memories. A critic scores the
//! proposal, and rejections feed lessons back before the actor is asked
//! again. Runs are scored step-wise and per task, and verified
//! teacher-forced runs can be exported as fine-tuning data.

pub mod action;
pub mod actor;
pub mod critic;
pub mod digest;
pub mod distill;
pub mod evaluation;
pub mod geometry;
pub mod grounding;
mod http;
pub mod memory;
pub mod rollout;
pub mod synth;
pub mod task;

pub use action::{parse_action, Action, ActionKind, Prediction};
pub use evaluation::{MatchMode, MetricsFile, MetricsReport};
pub use rollout::{run_suite, run_task, Backends, RunConfig, RunMode, TrajectoryRecord};
pub use task::{load_suite, load_task_bundle, validate_trajectory, Task};
