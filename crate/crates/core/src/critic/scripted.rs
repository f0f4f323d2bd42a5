use serde_json::json;

use crate::action::{Action, ActionKind};
use crate::actor::{BackendError, PolicyBackend, PolicyRequest, ReplyFormat};
use crate::evaluation::{step_correct, MatchMode};

/// A short task name for the step an action performs.
pub fn subtask_name(action: &Action) -> String {
    let verb = match action.kind() {
        ActionKind::Click => "Click",
        ActionKind::Scroll => "Scroll",
        ActionKind::Zoom => "Zoom",
        ActionKind::Text => "Fill",
        ActionKind::Segment => "Segment",
        ActionKind::Complete => return "Finish workflow".into(),
    };
    match action.target() {
        Some(t) => format!("{verb} {t}"),
        None => verb.to_string(),
    }
}

/// Judges proposals against the reference label. Its hints name the
/// expected action kind and never the expected arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedCritic {
    pub match_mode: MatchMode,
}

impl ScriptedCritic {
    pub fn new(match_mode: MatchMode) -> Self {
        Self { match_mode }
    }
}

impl PolicyBackend for ScriptedCritic {
    fn identity(&self) -> String {
        format!("scripted-critic:{}", self.match_mode)
    }

    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        if request.format != ReplyFormat::CriticJson {
            return Err(BackendError::Unsupported("scripted critics only review proposals".into()));
        }
        let r = request
            .reference
            .as_ref()
            .ok_or_else(|| BackendError::Unsupported("scripted critics need a step reference".into()))?;
        let proposal = r
            .proposal
            .as_ref()
            .ok_or_else(|| BackendError::Unsupported("no proposal to review".into()))?;

        let premature = proposal.kind() == ActionKind::Complete && r.step < r.total;
        let correct = !premature && step_correct(proposal, &r.label, self.match_mode);
        let mut completed: Vec<String> = Vec::new();
        for a in r.history.iter().chain(correct.then_some(&r.label)) {
            let name = subtask_name(a);
            if !completed.contains(&name) {
                completed.push(name);
            }
        }
        let done = correct && r.step == r.total;

        let (why, hint) = if correct {
            (String::new(), String::new())
        } else if premature {
            (
                format!("COMPLETE proposed at step {} before the workflow is finished.", r.step),
                format!("The expected action type is {}.", r.label.kind().as_str()),
            )
        } else if proposal.kind() != r.label.kind() {
            (
                format!("{} does not advance the workflow at this step.", proposal.kind().as_str()),
                format!("The expected action type is {}.", r.label.kind().as_str()),
            )
        } else {
            (
                format!("{} has the right type but the wrong arguments.", proposal.kind().as_str()),
                format!("Keep {} and re-check its target and arguments.", r.label.kind().as_str()),
            )
        };
        let action_note = if correct {
            format!("{} advances the workflow.", proposal.render())
        } else {
            format!("{} was rejected.", proposal.render())
        };
        Ok(json!({
            "action_correct": correct,
            "why_if_wrong": why,
            "hint_if_wrong": hint,
            "reflection": {
                "action": action_note,
                "trajectory": {"completed_subtasks": completed, "remaining_subtasks": []},
                "global": {"status": if done { "complete" } else { "incomplete" }, "missing_steps": []}
            },
            "tool_evaluation": {"tools_used": [], "tool_success": {}, "tool_lessons": []}
        })
        .to_string())
    }
}
