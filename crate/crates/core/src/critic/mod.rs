//! The critic: verdict parsing, scoring with the accept threshold, and the
//! three reflectors that turn a rejection into memory edits.

mod prompt;
mod reflect;
mod scripted;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::action::{ActionKind, Prediction};
use crate::actor::{clean_reply, reask_suffix, BackendError, Cleanup, PolicyBackend, PolicyRequest, ProtocolError, ReplyFormat};
use crate::memory::TaskStatus;

pub use prompt::{build_critic_prompt, CriticContext, CRITIC_CLOSING, CRITIC_SYSTEM_PROMPT};
pub use reflect::{detect_stall, reflect_action, reflect_global, reflect_trajectory, HistoryEntry, ReflectError};
pub use scripted::{subtask_name, ScriptedCritic};

/// Default accept threshold: a verdict is accepted when its score is
/// strictly above this.
pub const DEFAULT_ACCEPT_THRESHOLD: f64 = 0.5;

pub const PREMATURE_COMPLETE: &str = "premature_complete";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryReflection {
    pub completed_subtasks: Vec<String>,
    pub remaining_subtasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalReflection {
    pub status: TaskStatus,
    pub missing_steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub action: String,
    pub trajectory: TrajectoryReflection,
    pub global: GlobalReflection,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolEvaluation {
    pub tools_used: Vec<String>,
    pub tool_success: BTreeMap<String, bool>,
    pub tool_lessons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub action_correct: bool,
    /// In `[0, 1]`; a backend without a calibrated score gets 1.0 for a
    /// correct verdict and 0.0 otherwise.
    pub score: f64,
    pub why_if_wrong: String,
    pub hint_if_wrong: String,
    pub reflection: Reflection,
    pub tool_evaluation: ToolEvaluation,
    /// Set when the runtime overrode the backend's judgement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overridden: Option<String>,
}

impl CriticVerdict {
    /// A verdict for runs without a critic: everything passes with score 1.
    pub fn pass_through() -> Self {
        Self {
            action_correct: true,
            score: 1.0,
            why_if_wrong: String::new(),
            hint_if_wrong: String::new(),
            reflection: Reflection {
                action: String::new(),
                trajectory: TrajectoryReflection {
                    completed_subtasks: vec![],
                    remaining_subtasks: vec![],
                },
                global: GlobalReflection {
                    status: TaskStatus::Incomplete,
                    missing_steps: vec![],
                },
            },
            tool_evaluation: ToolEvaluation::default(),
            overridden: None,
        }
    }
}

/// Strict greater-than: a score equal to the threshold is rejected.
pub fn accept(verdict: &CriticVerdict, threshold: f64) -> bool {
    verdict.score > threshold
}

fn get<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, ProtocolError> {
    obj.get(key).ok_or_else(|| ProtocolError::MissingKey(join(path, key)))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn object<'a>(v: &'a Value, key: &str) -> Result<&'a Map<String, Value>, ProtocolError> {
    v.as_object().ok_or_else(|| ProtocolError::Schema {
        key: key.into(),
        reason: "expected an object".into(),
    })
}

fn string(v: &Value, key: &str) -> Result<String, ProtocolError> {
    v.as_str().map(str::to_string).ok_or_else(|| ProtocolError::Schema {
        key: key.into(),
        reason: "expected a string".into(),
    })
}

fn string_array(v: &Value, key: &str) -> Result<Vec<String>, ProtocolError> {
    let items = v.as_array().ok_or_else(|| ProtocolError::ArrayTyping { key: key.into() })?;
    items
        .iter()
        .map(|i| i.as_str().map(str::to_string))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| ProtocolError::ArrayTyping { key: key.into() })
}

fn optional_string(obj: &Map<String, Value>, key: &str) -> Result<String, ProtocolError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(v) => string(v, key),
    }
}

/// Parse a critic reply. Keys outside the schema are tolerated; the typed
/// ones are checked strictly, prose in place of an array included.
pub fn parse_critic_output(text: &str) -> Result<(CriticVerdict, Vec<Cleanup>), ProtocolError> {
    let (value, cleanups) = clean_reply(text)?;
    let root = object(&value, "reply")?;

    let action_correct = get(root, "", "action_correct")?.as_bool().ok_or_else(|| ProtocolError::Schema {
        key: "action_correct".into(),
        reason: "expected true or false".into(),
    })?;
    let score = match root.get("score") {
        None | Some(Value::Null) => {
            if action_correct {
                1.0
            } else {
                0.0
            }
        }
        Some(v) => match v.as_f64() {
            Some(s) if (0.0..=1.0).contains(&s) => s,
            _ => {
                return Err(ProtocolError::Schema {
                    key: "score".into(),
                    reason: "expected a number in [0, 1]".into(),
                })
            }
        },
    };
    let why_if_wrong = optional_string(root, "why_if_wrong")?;
    let hint_if_wrong = optional_string(root, "hint_if_wrong")?;

    let refl = object(get(root, "", "reflection")?, "reflection")?;
    let action = string(get(refl, "reflection", "action")?, "reflection.action")?;
    let traj = object(get(refl, "reflection", "trajectory")?, "reflection.trajectory")?;
    let completed = string_array(
        get(traj, "reflection.trajectory", "completed_subtasks")?,
        "reflection.trajectory.completed_subtasks",
    )?;
    let remaining = string_array(
        get(traj, "reflection.trajectory", "remaining_subtasks")?,
        "reflection.trajectory.remaining_subtasks",
    )?;
    let global = object(get(refl, "reflection", "global")?, "reflection.global")?;
    let status = match string(get(global, "reflection.global", "status")?, "reflection.global.status")?.as_str() {
        "complete" => TaskStatus::Complete,
        "incomplete" => TaskStatus::Incomplete,
        other => {
            return Err(ProtocolError::Schema {
                key: "reflection.global.status".into(),
                reason: format!("expected \"complete\" or \"incomplete\", got \"{other}\""),
            })
        }
    };
    let missing_steps = match global.get("missing_steps") {
        None => Vec::new(),
        Some(v) => string_array(v, "reflection.global.missing_steps")?,
    };

    let te = object(get(root, "", "tool_evaluation")?, "tool_evaluation")?;
    let tools_used = string_array(get(te, "tool_evaluation", "tools_used")?, "tool_evaluation.tools_used")?;
    let tool_success = match get(te, "tool_evaluation", "tool_success")? {
        Value::Object(m) => m
            .iter()
            .map(|(k, v)| v.as_bool().map(|b| (k.clone(), b)))
            .collect::<Option<BTreeMap<_, _>>>()
            .ok_or_else(|| ProtocolError::Schema {
                key: "tool_evaluation.tool_success".into(),
                reason: "values must be true or false".into(),
            })?,
        _ => {
            return Err(ProtocolError::Schema {
                key: "tool_evaluation.tool_success".into(),
                reason: "expected an object".into(),
            })
        }
    };
    let tool_lessons = string_array(get(te, "tool_evaluation", "tool_lessons")?, "tool_evaluation.tool_lessons")?;

    if status == TaskStatus::Complete && (!remaining.is_empty() || !missing_steps.is_empty()) {
        return Err(ProtocolError::Inconsistent("status complete with remaining subtasks or missing steps".into()));
    }
    if !action_correct && hint_if_wrong.trim().is_empty() {
        return Err(ProtocolError::Inconsistent("action_correct is false but hint_if_wrong is empty".into()));
    }

    Ok((
        CriticVerdict {
            action_correct,
            score,
            why_if_wrong,
            hint_if_wrong,
            reflection: Reflection {
                action,
                trajectory: TrajectoryReflection {
                    completed_subtasks: completed,
                    remaining_subtasks: remaining,
                },
                global: GlobalReflection { status, missing_steps },
            },
            tool_evaluation: ToolEvaluation {
                tools_used,
                tool_success,
                tool_lessons,
            },
            overridden: None,
        },
        cleanups,
    ))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriticError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("critic reply still invalid after {reasks} re-asks: {last}")]
    Unrepairable {
        reasks: usize,
        last: ProtocolError,
        replies: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredVerdict {
    pub verdict: CriticVerdict,
    pub raw: Vec<String>,
    pub cleanups: Vec<Cleanup>,
    pub reasks: usize,
}

/// Force a rejection of COMPLETE before the last step, whatever the
/// backend said.
pub fn enforce_complete_rule(verdict: &mut CriticVerdict, proposal: &Prediction, step: usize, total: usize) {
    if proposal.kind() == ActionKind::Complete && step < total {
        verdict.action_correct = false;
        verdict.score = 0.0;
        if verdict.hint_if_wrong.trim().is_empty() {
            verdict.hint_if_wrong = "COMPLETE is only allowed on the last step.".into();
        }
        if verdict.why_if_wrong.trim().is_empty() {
            verdict.why_if_wrong = format!("COMPLETE proposed at step {step} of {total}.");
        }
        verdict.reflection.global.status = TaskStatus::Incomplete;
        verdict.overridden = Some(PREMATURE_COMPLETE.into());
    }
}

/// Ask the critic backend to judge `proposal` at `step` of `total`.
pub fn score_action(
    backend: &dyn PolicyBackend,
    request: &PolicyRequest,
    proposal: &Prediction,
    step: usize,
    total: usize,
    max_reasks: usize,
) -> Result<ScoredVerdict, CriticError> {
    let mut req = request.clone();
    req.format = ReplyFormat::CriticJson;
    let mut raw = Vec::new();
    for reask in 0..=max_reasks {
        if let Some(r) = req.reference.as_mut() {
            r.reask = reask;
        }
        let text = backend.complete(&req)?;
        raw.push(text.clone());
        match parse_critic_output(&text) {
            Ok((mut verdict, cleanups)) => {
                enforce_complete_rule(&mut verdict, proposal, step, total);
                return Ok(ScoredVerdict {
                    verdict,
                    raw,
                    cleanups,
                    reasks: reask,
                });
            }
            Err(e) if reask == max_reasks => {
                return Err(CriticError::Unrepairable {
                    reasks: max_reasks,
                    last: e,
                    replies: raw,
                })
            }
            Err(e) => req.prompt.user.push_str(&reask_suffix(&e, ReplyFormat::CriticJson)),
        }
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::action::Action;
    use serde_json::json;

    pub(crate) fn verdict_json(correct: bool) -> Value {
        json!({
            "action_correct": correct,
            "why_if_wrong": if correct { "" } else { "wrong kind" },
            "hint_if_wrong": if correct { "" } else { "use SEGMENT" },
            "reflection": {
                "action": "ok",
                "trajectory": {"completed_subtasks": ["Load MRI data"], "remaining_subtasks": ["Export results"]},
                "global": {"status": "incomplete", "missing_steps": []}
            },
            "tool_evaluation": {"tools_used": ["ocr"], "tool_success": {"ocr": true}, "tool_lessons": []}
        })
    }

    #[test]
    fn valid_verdicts_parse_with_boolean_mapping() {
        let (v, _) = parse_critic_output(&verdict_json(true).to_string()).unwrap();
        assert!(v.action_correct);
        assert_eq!(v.score, 1.0);
        assert_eq!(v.reflection.trajectory.completed_subtasks, vec!["Load MRI data"]);
        let (v, _) = parse_critic_output(&verdict_json(false).to_string()).unwrap();
        assert_eq!(v.score, 0.0);
        let mut j = verdict_json(true);
        j["score"] = json!(0.73);
        j["extra_notes"] = json!("tolerated");
        assert_eq!(parse_critic_output(&j.to_string()).unwrap().0.score, 0.73);
    }

    #[test]
    fn prose_in_place_of_array() {
        let mut j = verdict_json(true);
        j["reflection"]["trajectory"]["completed_subtasks"] = json!("We loaded the data and opened the module.");
        let e = parse_critic_output(&j.to_string()).unwrap_err();
        assert_eq!(e.code(), "array_typing");
        assert!(e.to_string().contains("completed_subtasks"));
    }

    #[test]
    fn missing_tool_evaluation() {
        let mut j = verdict_json(true);
        j.as_object_mut().unwrap().remove("tool_evaluation");
        assert_eq!(
            parse_critic_output(&j.to_string()).unwrap_err(),
            ProtocolError::MissingKey("tool_evaluation".into())
        );
    }

    #[test]
    fn self_contradicting_verdicts() {
        let mut j = verdict_json(true);
        j["reflection"]["global"]["status"] = json!("complete");
        assert_eq!(parse_critic_output(&j.to_string()).unwrap_err().code(), "inconsistent");
        let mut j = verdict_json(false);
        j["hint_if_wrong"] = json!("");
        assert_eq!(parse_critic_output(&j.to_string()).unwrap_err().code(), "inconsistent");
        let mut j = verdict_json(true);
        j["score"] = json!(1.5);
        assert_eq!(parse_critic_output(&j.to_string()).unwrap_err().code(), "schema");
    }

    #[test]
    fn threshold_is_strict() {
        let mut v = CriticVerdict::pass_through();
        assert!(accept(&v, 0.5));
        v.score = 0.5;
        assert!(!accept(&v, 0.5));
        v.score = 0.0;
        assert!(!accept(&v, 0.5));
    }

    #[test]
    fn premature_complete_is_overridden() {
        let mut v = CriticVerdict::pass_through();
        let p: Prediction = Action::complete().into();
        enforce_complete_rule(&mut v, &p, 5, 12);
        assert!(!v.action_correct);
        assert_eq!(v.score, 0.0);
        assert_eq!(v.overridden.as_deref(), Some(PREMATURE_COMPLETE));
        let mut last = CriticVerdict::pass_through();
        enforce_complete_rule(&mut last, &p, 12, 12);
        assert!(last.action_correct);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn accept_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, t in 0.0f64..=1.0, u in 0.0f64..=1.0) {
            let v = |s: f64| CriticVerdict { score: s, ..CriticVerdict::pass_through() };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(!accept(&v(lo), t) || accept(&v(hi), t));
            let (tlo, thi) = if t <= u { (t, u) } else { (u, t) };
            prop_assert!(!accept(&v(a), thi) || accept(&v(a), tlo));
        }
    }
}
