use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use super::config::{Backends, ConfigError, RunConfig, RunMode};
use super::record::*;
use crate::action::{Action, ActionKind, Prediction};
use crate::actor::{
    build_actor_prompt, build_baseline_prompt, execute_tool_calls, propose_action, ActorContext, ActorReply, BaselineContext, PolicyRequest,
    PromptText, ReplyFormat, SamplingParams, StepReference,
};
use crate::critic::{
    accept, build_critic_prompt, reflect_action, reflect_global, reflect_trajectory, score_action, subtask_name, CriticContext, CriticVerdict,
    HistoryEntry,
};
use crate::digest::sha256_hex;
use crate::evaluation::{compute_report, emit_report, step_correct, MetricsFile, METRICS_FORMAT_VERSION};
use crate::grounding::{aggregate_grounding, baseline_sweep, ToolInvocation};
use crate::memory::{apply_reflection, ltm_update, render_memory_context, stm_update, LongTermMemory, ShortTermMemory, NONE};
use crate::task::{load_suite, validate_trajectory, LengthBounds, Task, TaskError};

pub const RECORDS_DIR: &str = "records";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILURES_FILE: &str = "failures.json";
pub const METRICS_FILE: &str = "metrics.json";

/// What the next step inherits from the committed previous one.
struct Carry {
    screen: String,
    action: Action,
    feedback: f64,
    lesson: Option<String>,
    ltm: LongTermMemory,
}

fn ground_truth_text(task: &Task, t: usize) -> String {
    let label = &task.steps[t - 1].label;
    let next = match task.steps.get(t) {
        Some(s) => {
            let path = task.image_path(s);
            s.view(&path).summary()
        }
        None => "end of workflow".to_string(),
    };
    format!("Reference action: {}\nNext screen: {next}", label.render())
}

fn trajectory_text(committed: &[Action], proposal: &Prediction) -> String {
    let mut lines: Vec<String> = committed
        .iter()
        .enumerate()
        .map(|(i, a)| format!("Step {}: {}", i + 1, a.render()))
        .collect();
    lines.push(format!("Step {}: {} (proposed)", committed.len() + 1, proposal.render()));
    lines.join("\n")
}

fn reply_text(reply: &ActorReply) -> String {
    match reply {
        ActorReply::Structured { output } => output.to_reply(),
        ActorReply::ActionType { kind } => kind.as_str().to_string(),
    }
}

/// Run one task under `cfg`. Never fails: backend failures are recorded on
/// the step they happen at.
pub fn run_task(task: &Task, cfg: &RunConfig, backends: &Backends) -> TrajectoryRecord {
    let cfg = cfg.normalized();
    let flags = cfg.flags;
    let total = task.len();
    let baseline = cfg.mode == RunMode::ZeroShotBaseline;
    let format = if baseline { ReplyFormat::ActionType } else { ReplyFormat::ActorJson };
    let params = SamplingParams {
        seed: Some(cfg.seed),
        ..SamplingParams::default()
    };

    let mut steps: Vec<StepRecord> = Vec::with_capacity(total);
    let mut committed: Vec<Action> = Vec::new();
    let mut carry: Option<Carry> = None;
    let mut final_status = FinalStatus::Finished;

    for (i, step) in task.steps.iter().enumerate() {
        let t = i + 1;
        let path = task.image_path(step);
        let view = step.view(&path);
        let summary = view.summary();

        let mut invocations: Vec<ToolInvocation> = Vec::new();
        if flags.use_tools {
            for call in baseline_sweep() {
                let seq = invocations.len();
                invocations.push(ToolInvocation::run(seq, call, backends.tools.as_ref(), &view));
            }
        }
        let features = aggregate_grounding(&invocations);

        let (stm_before, ltm_before) = if baseline {
            (ShortTermMemory::initial(), LongTermMemory::default())
        } else {
            match &carry {
                None => (ShortTermMemory::initial(), ltm_update(&LongTermMemory::default(), &ShortTermMemory::initial(), &features, t)),
                Some(c) => {
                    let stm = stm_update(Some(&c.screen), Some(&c.action), Some(c.feedback), c.lesson.as_deref())
                        .expect("carried feedback lies in [0, 1]");
                    let ltm = ltm_update(&c.ltm, &stm, &features, t);
                    (stm, ltm)
                }
            }
        };

        let history: Vec<HistoryEntry> = committed
            .iter()
            .enumerate()
            .map(|(k, a)| HistoryEntry {
                step: k + 1,
                accepted: Some(a.clone()),
            })
            .collect();
        let history_kinds: Vec<ActionKind> = committed.iter().map(Action::kind).collect();

        let mut stm = stm_before.clone();
        let mut ltm = ltm_before.clone();
        let mut step_features = features.clone();
        let mut hints: Vec<String> = Vec::new();
        let mut proposals: Vec<ProposalRecord> = Vec::new();
        let mut accepted: Option<Prediction> = None;
        let mut feedback = 0.0;
        let mut failure: Option<String> = None;
        let mut rejected_once = false;

        for attempt in 0..=cfg.max_revisions {
            let prompt = if baseline {
                build_baseline_prompt(&BaselineContext {
                    goal: &task.goal,
                    step: t,
                    total,
                    features: &step_features,
                    history: &history_kinds,
                    available: &ActionKind::ALL,
                })
            } else {
                build_actor_prompt(&ActorContext {
                    goal: &task.goal,
                    step: t,
                    total_hint: flags.expose_total_steps.then_some(total),
                    features: &step_features,
                    stm: &stm,
                    ltm: &ltm,
                    use_stm: flags.use_stm,
                    use_ltm: flags.use_ltm,
                    available: &ActionKind::ALL,
                    tool_hints: &hints,
                })
            };
            let reference = StepReference {
                task_id: task.id.clone(),
                step: t,
                total,
                label: step.label.clone(),
                attempt,
                reask: 0,
                proposal: None,
                history: committed.clone(),
            };
            let mut record = ProposalRecord {
                attempt,
                prompt_sha256: sha256_hex(prompt.joined().as_bytes()),
                raw: vec![],
                cleanups: vec![],
                reasks: 0,
                reply: None,
                prediction: None,
                tool_results: vec![],
                verdict: None,
                critic_raw: vec![],
                accepted: false,
                deltas: vec![],
                error: None,
            };
            let request = PolicyRequest {
                prompt,
                images: vec![path.clone()],
                params,
                format,
                reference: Some(reference.clone()),
            };

            let proposal = match propose_action(backends.actor.as_ref(), &request, t, cfg.repair_attempts) {
                Ok(p) => p,
                Err(e) => {
                    if let crate::actor::ActorError::Unrepairable { replies, .. } = &e {
                        record.raw = replies.clone();
                    }
                    record.error = Some(format!("actor: {e}"));
                    failure = record.error.clone();
                    proposals.push(record);
                    break;
                }
            };
            let prediction = proposal.prediction();
            record.raw = proposal.raw.clone();
            record.cleanups = proposal.cleanups.clone();
            record.reasks = proposal.reasks;
            record.reply = Some(proposal.reply.clone());
            record.prediction = Some(prediction.clone());

            if flags.use_tools && !proposal.reply.tool_calls().is_empty() {
                let run = execute_tool_calls(proposal.reply.tool_calls(), backends.tools.as_ref(), &view, invocations.len());
                invocations.extend(run.invocations);
                record.tool_results = run.results;
                step_features = aggregate_grounding(&invocations);
            }

            let verdict = if flags.critic_enabled {
                let truth = if flags.critic_sees_ground_truth {
                    ground_truth_text(task, t)
                } else {
                    "unavailable".to_string()
                };
                let tool_context = step_features.render();
                let tool_context = if tool_context.is_empty() { tool_context } else { format!("{tool_context}\n\n") };
                let memory = render_memory_context(&stm, &ltm, flags.use_stm, flags.use_ltm);
                let output = reply_text(&proposal.reply);
                let trajectory = trajectory_text(&committed, &prediction);
                let critic_prompt = build_critic_prompt(&CriticContext {
                    goal: &task.goal,
                    step: t,
                    target_output: &output,
                    tool_context: &tool_context,
                    memory_context: &memory,
                    ground_truth_after_action: &truth,
                    full_trajectory: &trajectory,
                });
                let critic_request = PolicyRequest {
                    prompt: critic_prompt,
                    images: vec![path.clone()],
                    params,
                    format: ReplyFormat::CriticJson,
                    reference: Some(StepReference {
                        proposal: Some(prediction.clone()),
                        ..reference
                    }),
                };
                match score_action(backends.critic.as_ref(), &critic_request, &prediction, t, total, cfg.repair_attempts) {
                    Ok(scored) => {
                        record.critic_raw = scored.raw;
                        scored.verdict
                    }
                    Err(e) => {
                        if let crate::critic::CriticError::Unrepairable { replies, .. } = &e {
                            record.critic_raw = replies.clone();
                        }
                        record.error = Some(format!("critic: {e}"));
                        failure = record.error.clone();
                        proposals.push(record);
                        break;
                    }
                }
            } else {
                CriticVerdict::pass_through()
            };

            feedback = verdict.score;
            record.accepted = accept(&verdict, cfg.accept_threshold);
            if record.accepted {
                accepted = Some(prediction);
                record.verdict = Some(verdict);
                proposals.push(record);
                break;
            }

            rejected_once = true;
            let expected = flags.critic_sees_ground_truth.then(|| step.label.kind());
            let mut apply = |d: crate::memory::ReflectionDelta, stm: &mut ShortTermMemory, ltm: &mut LongTermMemory| {
                match apply_reflection(stm, ltm, &d) {
                    Ok((s, l)) => {
                        *stm = s;
                        *ltm = l;
                        record.deltas.push(d);
                    }
                    Err(e) => record.error = Some(format!("reflection: {e}")),
                }
            };
            if let Ok(d) = reflect_action(&summary, None, &prediction, &verdict, false, expected) {
                apply(d, &mut stm, &mut ltm);
            }
            let d = reflect_trajectory(&history, &verdict, &ltm, cfg.window, cfg.stall);
            apply(d, &mut stm, &mut ltm);
            let d = reflect_global(&history, &verdict, &ltm, t == total);
            apply(d, &mut stm, &mut ltm);
            hints = verdict.tool_evaluation.tool_lessons.clone();
            record.verdict = Some(verdict);
            proposals.push(record);
        }

        if failure.is_some() {
            feedback = 0.0;
        }
        let step_record = StepRecord {
            step: t,
            image: task.image_ref(step),
            label: step.label.clone(),
            features,
            stm_before: stm_before.clone(),
            ltm_before: ltm_before.clone(),
            stm_after: stm.clone(),
            ltm_after: ltm.clone(),
            revisions_used: proposals.len().saturating_sub(1),
            proposals,
            accepted: accepted.clone(),
            feedback,
            failure: failure.clone(),
        };
        steps.push(step_record);

        match cfg.mode {
            RunMode::TeacherForced | RunMode::ZeroShotBaseline => {
                let mut next_ltm = ltm_before;
                next_ltm.complete_subtask(&subtask_name(&step.label));
                carry = Some(Carry {
                    screen: summary,
                    action: step.label.clone(),
                    feedback: 1.0,
                    lesson: None,
                    ltm: next_ltm,
                });
                committed.push(step.label.clone());
            }
            RunMode::FreeRunning => {
                let action = accepted.as_ref().and_then(Prediction::action).cloned();
                let reason = match (&failure, &action) {
                    (Some(f), _) => Some(f.clone()),
                    (None, None) => Some("revisions exhausted".to_string()),
                    (None, Some(a)) if !step_correct(&a.clone().into(), &step.label, cfg.match_mode) => {
                        Some("accepted action differs from the label".to_string())
                    }
                    _ => None,
                };
                if let Some(reason) = reason {
                    if t < total {
                        final_status = FinalStatus::Terminated { step: t, reason };
                    }
                    break;
                }
                let action = action.expect("checked above");
                let mut next_ltm = ltm;
                next_ltm.complete_subtask(&subtask_name(&action));
                let lesson = (rejected_once && stm.last_lesson != NONE).then(|| stm.last_lesson.clone());
                carry = Some(Carry {
                    screen: summary,
                    action: action.clone(),
                    feedback,
                    lesson,
                    ltm: next_ltm,
                });
                committed.push(action);
            }
        }
    }

    let mut record = TrajectoryRecord {
        format_version: RECORD_FORMAT_VERSION,
        task_id: task.id.clone(),
        category: task.category.as_str().to_string(),
        goal: task.goal.clone(),
        total_steps: total,
        mode: cfg.mode,
        match_mode: cfg.match_mode,
        flags,
        config_hash: cfg.hash(),
        steps,
        final_status,
        verified: false,
    };
    record.verified = record.verify(cfg.match_mode);
    record
}

/// Run tasks with at most `cfg.workers` in flight. Output order follows
/// input order whatever the scheduling.
pub fn run_tasks(tasks: &[Task], cfg: &RunConfig, backends: &Backends) -> Vec<TrajectoryRecord> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| tasks.par_iter().map(|t| run_task(t, cfg, backends)).collect())
}

/// Both match-mode reports for a set of records.
pub fn metrics_file(records: &[TrajectoryRecord], config_hash: &str) -> MetricsFile {
    let report = |mode| {
        let outcomes: Vec<_> = records.iter().map(|r| r.outcome(mode)).collect();
        compute_report(&outcomes, mode, config_hash)
    };
    MetricsFile {
        format_version: METRICS_FORMAT_VERSION,
        kind_only: report(crate::evaluation::MatchMode::KindOnly),
        canonical_full: report(crate::evaluation::MatchMode::CanonicalFull),
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Suite(#[from] TaskError),
    #[error("suite {0} contains no tasks")]
    EmptySuite(PathBuf),
    #[error("output directory {0} already exists and is not empty")]
    OutputExists(PathBuf),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run directory {path} is unreadable: {reason}")]
    BadRun { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub failures: Vec<FailureEntry>,
    pub metrics: MetricsFile,
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Run every task of the suite at `suite_dir` and write the run directory.
/// Tasks that fail to load or validate are listed in `failures.json`; the
/// suite never aborts on them.
pub fn run_suite(suite_dir: &Path, cfg: &RunConfig, backends: &Backends, out: &Path) -> Result<RunSummary, RunError> {
    let cfg = cfg.normalized();
    cfg.validate()?;
    if out.exists() && fs::read_dir(out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        return Err(RunError::OutputExists(out.to_path_buf()));
    }
    let started_at = now();
    let entries = load_suite(suite_dir)?;
    if entries.is_empty() {
        return Err(RunError::EmptySuite(suite_dir.to_path_buf()));
    }
    let total_entries = entries.len();
    let mut tasks = Vec::new();
    let mut failures = Vec::new();
    for e in entries {
        match e.task {
            Ok(task) => {
                let report = validate_trajectory(&task, LengthBounds::new(1, usize::MAX));
                if report.passed {
                    tasks.push(task);
                } else {
                    let reasons: Vec<String> = report.violations.iter().map(|v| format!("{}: {}", v.code, v.message)).collect();
                    failures.push(FailureEntry {
                        task: e.name,
                        reason: reasons.join("; "),
                    });
                }
            }
            Err(err) => failures.push(FailureEntry {
                task: e.name,
                reason: err.to_string(),
            }),
        }
    }
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    failures.sort_by(|a, b| a.task.cmp(&b.task));

    let records = run_tasks(&tasks, &cfg, backends);
    let hash = cfg.hash();
    let metrics = metrics_file(&records, &hash);

    let records_dir = out.join(RECORDS_DIR);
    fs::create_dir_all(&records_dir).map_err(|source| RunError::Io {
        path: records_dir.clone(),
        source,
    })?;
    for r in &records {
        write(&records_dir.join(format!("{}.json", r.task_id)), &r.to_json())?;
    }
    write(
        &out.join(FAILURES_FILE),
        &pretty(&FailuresFile {
            format_version: RECORD_FORMAT_VERSION,
            failures: failures.clone(),
        }),
    )?;
    write(&out.join(METRICS_FILE), &pretty(&metrics))?;
    emit_report(metrics.get(cfg.match_mode), out).map_err(|source| RunError::Io {
        path: out.to_path_buf(),
        source,
    })?;

    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        suite: suite_dir.display().to_string(),
        config: cfg.clone(),
        config_hash: hash,
        seed: cfg.seed,
        critic_sees_ground_truth: cfg.flags.critic_sees_ground_truth,
        backends: BackendIdentities {
            actor: backends.actor.identity(),
            critic: cfg.flags.critic_enabled.then(|| backends.critic.identity()),
            tools: backends.tools.identity(),
        },
        started_at,
        finished_at: now(),
        counts: RunCounts {
            tasks_total: total_entries,
            records: records.len(),
            verified: records.iter().filter(|r| r.verified).count(),
            failed: failures.len(),
        },
        task_ids: records.iter().map(|r| r.task_id.clone()).collect(),
    };
    write(&out.join(MANIFEST_FILE), &pretty(&manifest))?;
    Ok(RunSummary {
        manifest,
        failures,
        metrics,
    })
}

/// A run directory read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub records: Vec<TrajectoryRecord>,
    /// Ids listed in the manifest with no record file.
    pub missing: Vec<String>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, RunError> {
    let bad = |path: &Path, reason: String| RunError::BadRun {
        path: path.to_path_buf(),
        reason,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| bad(&manifest_path, e.to_string()))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| bad(&manifest_path, e.to_string()))?;
    if manifest.config.hash() != manifest.config_hash {
        return Err(bad(&manifest_path, "config hash does not match the recorded config".into()));
    }
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for id in &manifest.task_ids {
        let path = dir.join(RECORDS_DIR).join(format!("{id}.json"));
        match fs::read_to_string(&path) {
            Ok(text) => records.push(serde_json::from_str(&text).map_err(|e| bad(&path, e.to_string()))?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => missing.push(id.clone()),
            Err(e) => return Err(bad(&path, e.to_string())),
        }
    }
    Ok(LoadedRun {
        manifest,
        records,
        missing,
    })
}

/// Rebuild the first-attempt actor prompt of a step from its snapshots.
pub fn rebuild_actor_prompt(record: &TrajectoryRecord, step: &StepRecord) -> PromptText {
    build_actor_prompt(&ActorContext {
        goal: &record.goal,
        step: step.step,
        total_hint: record.flags.expose_total_steps.then_some(record.total_steps),
        features: &step.features,
        stm: &step.stm_before,
        ltm: &step.ltm_before,
        use_stm: record.flags.use_stm,
        use_ltm: record.flags.use_ltm,
        available: &ActionKind::ALL,
        tool_hints: &[],
    })
}
