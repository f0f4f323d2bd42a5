//! Supervised fine-tuning export from critic-verified teacher-forced runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor::ActorReply;
use crate::digest::sha256_hex;
use crate::evaluation::MatchMode;
use crate::grounding::GroundingFeatures;
use crate::memory::{LongTermMemory, ShortTermMemory};
use crate::rollout::{load_run, rebuild_actor_prompt, RunError, RunMode, TrajectoryRecord};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const DATASET_CARD_FILE: &str = "dataset_card.json";

/// Feedback stamped on step 1, which has no previous step.
pub const FIRST_STEP_FEEDBACK: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("record {task} comes from a {mode} run; only teacher_forced runs can be exported")]
    WrongMode { task: String, mode: &'static str },
    #[error("record {task} step {step}: {reason}")]
    SnapshotGap { task: String, step: usize, reason: String },
    #[error("nothing to write: no samples")]
    Empty,
    #[error("run directory is missing records: {}", .0.join(", "))]
    MissingRecords(Vec<String>),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub task_id: String,
    pub step: usize,
    pub stm: ShortTermMemory,
    pub ltm: LongTermMemory,
    pub features: GroundingFeatures,
    /// Feedback on the previous step.
    pub feedback: f64,
    pub feedback_is_sentinel: bool,
    /// Revisions the critic needed before accepting this step.
    pub revisions_used: usize,
    pub config_hash: String,
    pub match_mode: MatchMode,
    pub structured_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub prompt: String,
    pub images: Vec<String>,
    pub target: String,
    pub metadata: SampleMetadata,
}

/// Keep records with V=1 whose every step was accepted by an enabled
/// critic. Fails on records from any mode other than teacher forcing.
pub fn filter_successful(records: &[TrajectoryRecord]) -> Result<Vec<TrajectoryRecord>, DistillError> {
    let mut kept = Vec::new();
    for r in records {
        if r.mode != RunMode::TeacherForced {
            return Err(DistillError::WrongMode {
                task: r.task_id.clone(),
                mode: r.mode.as_str(),
            });
        }
        let critic_accepted = r.flags.critic_enabled
            && r.steps.iter().all(|s| {
                s.accepted.is_some() && s.proposals.last().is_some_and(|p| p.accepted && p.verdict.is_some())
            });
        if r.verify(r.match_mode) && critic_accepted {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

/// One sample per step, prompts rebuilt from the persisted snapshots and
/// checked against the hash of what the actor was sent.
pub fn emit_sft_samples(record: &TrajectoryRecord, structured: bool) -> Result<Vec<SftSample>, DistillError> {
    let gap = |step: usize, reason: String| DistillError::SnapshotGap {
        task: record.task_id.clone(),
        step,
        reason,
    };
    if record.steps.len() != record.total_steps {
        return Err(gap(record.steps.len() + 1, "step record missing".into()));
    }
    let mut out = Vec::with_capacity(record.steps.len());
    for (i, s) in record.steps.iter().enumerate() {
        if s.step != i + 1 {
            return Err(gap(i + 1, format!("found step {} in position {}", s.step, i + 1)));
        }
        let first = s.proposals.first().ok_or_else(|| gap(s.step, "no proposals".into()))?;
        let prompt = rebuild_actor_prompt(record, s).joined();
        if sha256_hex(prompt.as_bytes()) != first.prompt_sha256 {
            return Err(gap(s.step, "rebuilt prompt differs from the one the actor saw".into()));
        }
        let action = s
            .accepted
            .as_ref()
            .and_then(|p| p.action())
            .ok_or_else(|| gap(s.step, "no accepted action".into()))?;
        let target = if structured {
            match s.proposals.last().and_then(|p| p.reply.as_ref()) {
                Some(ActorReply::Structured { output }) => output.to_reply(),
                _ => return Err(gap(s.step, "no structured reply for the accepted action".into())),
            }
        } else {
            action.render()
        };
        let (feedback, sentinel) = match s.stm_before.last_feedback {
            Some(r) => (r, false),
            None if s.step == 1 => (FIRST_STEP_FEEDBACK, true),
            None => return Err(gap(s.step, "previous-step feedback missing".into())),
        };
        if feedback <= 0.0 {
            return Err(gap(s.step, format!("feedback {feedback} is not positive")));
        }
        out.push(SftSample {
            prompt,
            images: vec![s.image.clone()],
            target,
            metadata: SampleMetadata {
                task_id: record.task_id.clone(),
                step: s.step,
                stm: s.stm_before.clone(),
                ltm: s.ltm_before.clone(),
                features: s.features.clone(),
                feedback,
                feedback_is_sentinel: sentinel,
                revisions_used: s.revisions_used,
                config_hash: record.config_hash.clone(),
                match_mode: record.match_mode,
                structured_target: structured,
            },
        });
    }
    Ok(out)
}

/// JSON lines sorted by (task id, step).
pub fn dataset_jsonl(samples: &[SftSample]) -> Result<String, DistillError> {
    if samples.is_empty() {
        return Err(DistillError::Empty);
    }
    let mut sorted: Vec<&SftSample> = samples.iter().collect();
    sorted.sort_by(|a, b| (&a.metadata.task_id, a.metadata.step).cmp(&(&b.metadata.task_id, b.metadata.step)));
    let mut out = String::new();
    for s in sorted {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(samples: &[SftSample], path: &Path) -> Result<(), DistillError> {
    let text = dataset_jsonl(samples)?;
    fs::write(path, text).map_err(|source| DistillError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCard {
    pub format_version: u32,
    pub source_run: String,
    pub config_hash: String,
    pub filters: Vec<String>,
    pub records_in: usize,
    pub records_kept: usize,
    pub samples: usize,
    pub structured_targets: bool,
    /// What a trainer is expected to optimize over the samples.
    pub objective: String,
}

/// Export a run directory to `out/dataset.jsonl` and `out/dataset_card.json`.
pub fn export_run(run_dir: &Path, out: &Path, structured: bool) -> Result<DatasetCard, DistillError> {
    let run = load_run(run_dir)?;
    if !run.missing.is_empty() {
        return Err(DistillError::MissingRecords(run.missing));
    }
    let kept = filter_successful(&run.records)?;
    let mut samples = Vec::new();
    for r in &kept {
        samples.extend(emit_sft_samples(r, structured)?);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DistillError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    write_dataset(&samples, &out.join(DATASET_FILE))?;
    let card = DatasetCard {
        format_version: DATASET_FORMAT_VERSION,
        source_run: run_dir.display().to_string(),
        config_hash: run.manifest.config_hash.clone(),
        filters: vec![
            "mode == teacher_forced".into(),
            "verified == true".into(),
            "every step accepted by the critic".into(),
        ],
        records_in: run.records.len(),
        records_kept: kept.len(),
        samples: samples.len(),
        structured_targets: structured,
        objective: "sum over samples of -log p(target | prompt, images)".into(),
    };
    let card_path = out.join(DATASET_CARD_FILE);
    let mut text = serde_json::to_string_pretty(&card).expect("card serializes");
    text.push('\n');
    fs::write(&card_path, text).map_err(io(&card_path))?;
    Ok(card)
}
