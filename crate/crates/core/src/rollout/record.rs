use serde::{Deserialize, Serialize};

use super::config::{RunConfig, RunFlags, RunMode};
use crate::action::{Action, Prediction};
use crate::actor::{ActorReply, Cleanup, ToolResultEntry};
use crate::critic::CriticVerdict;
use crate::evaluation::{step_correct, MatchMode, TaskOutcome};
use crate::grounding::GroundingFeatures;
use crate::memory::{LongTermMemory, ReflectionDelta, ShortTermMemory};

pub const RECORD_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// One actor attempt within a step and what the critic made of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub attempt: usize,
    /// sha256 of the full prompt (system and user joined).
    pub prompt_sha256: String,
    /// Raw actor replies, re-asks included.
    pub raw: Vec<String>,
    pub cleanups: Vec<Cleanup>,
    pub reasks: usize,
    pub reply: Option<ActorReply>,
    pub prediction: Option<Prediction>,
    pub tool_results: Vec<ToolResultEntry>,
    pub verdict: Option<CriticVerdict>,
    pub critic_raw: Vec<String>,
    pub accepted: bool,
    /// Reflection deltas applied after a rejection, in application order.
    pub deltas: Vec<ReflectionDelta>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Image reference relative to the suite root.
    pub image: String,
    pub label: Action,
    /// Grounding the first attempt was prompted with.
    pub features: GroundingFeatures,
    pub stm_before: ShortTermMemory,
    pub ltm_before: LongTermMemory,
    pub stm_after: ShortTermMemory,
    pub ltm_after: LongTermMemory,
    pub proposals: Vec<ProposalRecord>,
    pub accepted: Option<Prediction>,
    pub revisions_used: usize,
    /// Score of the final verdict; 0 when the step failed.
    pub feedback: f64,
    pub failure: Option<String>,
}

impl StepRecord {
    pub fn correct(&self, mode: MatchMode) -> bool {
        self.accepted.as_ref().is_some_and(|p| step_correct(p, &self.label, mode))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FinalStatus {
    /// Every step was executed.
    Finished,
    /// A free-running task stopped early.
    Terminated { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub format_version: u32,
    pub task_id: String,
    pub category: String,
    pub goal: String,
    pub total_steps: usize,
    pub mode: RunMode,
    pub match_mode: MatchMode,
    pub flags: RunFlags,
    pub config_hash: String,
    pub steps: Vec<StepRecord>,
    pub final_status: FinalStatus,
    /// Verifier bit under `match_mode`.
    pub verified: bool,
}

impl TrajectoryRecord {
    /// Per-step correctness under `mode`; unexecuted steps count as wrong.
    pub fn outcome(&self, mode: MatchMode) -> TaskOutcome {
        let mut steps: Vec<bool> = self.steps.iter().map(|s| s.correct(mode)).collect();
        steps.resize(self.total_steps, false);
        TaskOutcome {
            task_id: self.task_id.clone(),
            category: self.category.clone(),
            steps,
        }
    }

    /// 1 iff every step ran, was accepted and matches its label.
    pub fn verify(&self, mode: MatchMode) -> bool {
        self.steps.len() == self.total_steps && self.steps.iter().all(|s| s.correct(mode))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendIdentities {
    pub actor: String,
    pub critic: Option<String>,
    pub tools: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub tasks_total: usize,
    pub records: usize,
    pub verified: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub suite: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub critic_sees_ground_truth: bool,
    pub backends: BackendIdentities,
    pub started_at: String,
    pub finished_at: String,
    pub counts: RunCounts,
    /// Record ids in file order.
    pub task_ids: Vec<String>,
}

/// A task that produced no record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub task: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailuresFile {
    pub format_version: u32,
    pub failures: Vec<FailureEntry>,
}
