//! The per-step actor/critic loop, task and suite drivers, and the run
//! directory they write.

mod config;
mod record;
mod runner;

pub use config::{ActorSpec, Backends, ConfigError, CriticSpec, RunConfig, RunFlags, RunMode, ToolsSpec};
pub use record::{
    BackendIdentities, FailureEntry, FailuresFile, FinalStatus, ProposalRecord, RunCounts, RunManifest, StepRecord, TrajectoryRecord,
    MANIFEST_FORMAT_VERSION, RECORD_FORMAT_VERSION,
};
pub use runner::{
    load_run, metrics_file, rebuild_actor_prompt, run_suite, run_task, run_tasks, LoadedRun, RunError, RunSummary, FAILURES_FILE,
    MANIFEST_FILE, METRICS_FILE, RECORDS_DIR,
};
