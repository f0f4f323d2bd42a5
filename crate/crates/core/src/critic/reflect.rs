use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CriticVerdict;
use crate::action::{Action, ActionKind, Prediction};
use crate::memory::{LongTermMemory, ReflectionDelta, TaskStatus};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReflectError {
    #[error("action reflection requires a rejected verdict")]
    AcceptedVerdict,
}

/// One step of accepted history as the reflectors see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub accepted: Option<Action>,
}

/// Step-level lesson for a rejected proposal. `after` is the screen observed
/// after executing the proposal, when one exists; `expected` is the kind the
/// critic asked for, when known.
pub fn reflect_action(
    before: &str,
    after: Option<&str>,
    proposal: &Prediction,
    verdict: &CriticVerdict,
    accepted: bool,
    expected: Option<ActionKind>,
) -> Result<ReflectionDelta, ReflectError> {
    if accepted {
        return Err(ReflectError::AcceptedVerdict);
    }
    let kind = proposal.kind();
    let mut parts = Vec::new();
    if let Some(e) = expected.filter(|e| *e != kind) {
        parts.push(format!("{} instead of {}", kind.as_str(), e.as_str()));
    }
    if after == Some(before) {
        parts.push(format!("{} had no visible effect", kind.as_str()));
    }
    let hint = verdict.hint_if_wrong.trim();
    let why = verdict.why_if_wrong.trim();
    if !hint.is_empty() {
        parts.push(hint.to_string());
    } else if !why.is_empty() {
        parts.push(why.to_string());
    }
    if parts.is_empty() {
        parts.push(format!("{} was rejected", proposal.render()));
    }
    Ok(ReflectionDelta::Action {
        lesson: parts.join("; "),
        observation: None,
    })
}

/// A pitfall when the last `stall` accepted actions are all the same.
pub fn detect_stall(window: &[HistoryEntry], stall: usize) -> Option<String> {
    if stall < 2 {
        return None;
    }
    let accepted: Vec<&Action> = window.iter().filter_map(|h| h.accepted.as_ref()).collect();
    let tail = accepted.get(accepted.len().checked_sub(stall)?..)?;
    let first = tail[0];
    tail.iter()
        .all(|a| *a == first)
        .then(|| format!("Repeated {} {stall} times without progress", first.render()))
}

/// Subtask progress over the last `window` steps of history.
pub fn reflect_trajectory(
    history: &[HistoryEntry],
    verdict: &CriticVerdict,
    ltm: &LongTermMemory,
    window: usize,
    stall: usize,
) -> ReflectionDelta {
    let recent = &history[history.len().saturating_sub(window)..];
    let clean = |items: &[String]| -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
            if !out.iter().any(|o| o == s) {
                out.push(s.to_string());
            }
        }
        out
    };
    let completed: Vec<String> = clean(&verdict.reflection.trajectory.completed_subtasks)
        .into_iter()
        .filter(|c| !ltm.completed_subtasks.contains(c))
        .collect();
    let remaining: Vec<String> = clean(&verdict.reflection.trajectory.remaining_subtasks)
        .into_iter()
        .filter(|r| !completed.contains(r) && !ltm.completed_subtasks.contains(r))
        .collect();
    ReflectionDelta::Trajectory {
        completed,
        remaining,
        pitfalls: detect_stall(recent, stall).into_iter().collect(),
    }
}

/// Whole-task status. Complete only on the last step, after an accepted
/// COMPLETE, with nothing remaining or missing. `ltm` should already carry
/// the trajectory delta of the same round.
pub fn reflect_global(history: &[HistoryEntry], verdict: &CriticVerdict, ltm: &LongTermMemory, is_last_step: bool) -> ReflectionDelta {
    let missing: Vec<String> = verdict
        .reflection
        .global
        .missing_steps
        .iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let finished = history
        .last()
        .and_then(|h| h.accepted.as_ref())
        .is_some_and(|a| a.kind() == ActionKind::Complete);
    let complete = is_last_step && finished && ltm.remaining_subtasks.is_empty() && missing.is_empty();
    let accepted = history.iter().filter(|h| h.accepted.is_some()).count();
    ReflectionDelta::Global {
        status: if complete { TaskStatus::Complete } else { TaskStatus::Incomplete },
        missing_steps: missing,
        summary: Some(format!("{accepted} steps accepted so far")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{apply_reflection, ShortTermMemory};

    fn rejected(hint: &str) -> CriticVerdict {
        let mut v = CriticVerdict::pass_through();
        v.action_correct = false;
        v.score = 0.0;
        v.hint_if_wrong = hint.into();
        v
    }

    fn entries(actions: &[Action]) -> Vec<HistoryEntry> {
        actions
            .iter()
            .enumerate()
            .map(|(i, a)| HistoryEntry {
                step: i + 1,
                accepted: Some(a.clone()),
            })
            .collect()
    }

    #[test]
    fn action_lessons() {
        let p: Prediction = Action::click("Save").into();
        let d = reflect_action("s", Some("s"), &p, &rejected(""), false, None).unwrap();
        assert!(matches!(&d, ReflectionDelta::Action { lesson, .. } if lesson.contains("no visible effect")));

        let z = Prediction::KindOnly { kind: ActionKind::Zoom };
        let d = reflect_action("s", None, &z, &rejected("The expected action type is CLICK."), false, Some(ActionKind::Click)).unwrap();
        assert!(matches!(&d, ReflectionDelta::Action { lesson, .. } if lesson.starts_with("ZOOM instead of CLICK")));

        assert_eq!(
            reflect_action("s", None, &p, &CriticVerdict::pass_through(), true, None),
            Err(ReflectError::AcceptedVerdict)
        );
    }

    #[test]
    fn trajectory_moves_fresh_completions() {
        let mut ltm = LongTermMemory::default();
        ltm.add_remaining("Click Save");
        let mut v = rejected("x");
        v.reflection.trajectory.completed_subtasks = vec!["Click Save".into()];
        v.reflection.trajectory.remaining_subtasks = vec!["Click Save".into(), "Export".into()];
        let d = reflect_trajectory(&[], &v, &ltm, 5, 3);
        let (_, after) = apply_reflection(&ShortTermMemory::initial(), &ltm, &d).unwrap();
        assert_eq!(after.completed_subtasks, vec!["Click Save"]);
        assert_eq!(after.remaining_subtasks, vec!["Export"]);
    }

    #[test]
    fn stall_becomes_pitfall() {
        let a = Action::click("Next");
        let h = entries(&[Action::click("Load"), a.clone(), a.clone(), a.clone()]);
        assert!(detect_stall(&h, 3).unwrap().contains("CLICK"));
        assert_eq!(detect_stall(&h[..3], 3), None);
        match reflect_trajectory(&h, &rejected("x"), &LongTermMemory::default(), 5, 3) {
            ReflectionDelta::Trajectory { pitfalls, .. } => assert_eq!(pitfalls.len(), 1),
            other => panic!("{other:?}"),
        }
        // Outside the window the repeats no longer count.
        match reflect_trajectory(&h, &rejected("x"), &LongTermMemory::default(), 2, 3) {
            ReflectionDelta::Trajectory { pitfalls, .. } => assert!(pitfalls.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn global_status() {
        let h = entries(&[Action::click("a"), Action::complete()]);
        let v = CriticVerdict::pass_through();
        let ltm = LongTermMemory::default();
        let done = reflect_global(&h, &v, &ltm, true);
        assert!(matches!(done, ReflectionDelta::Global { status: TaskStatus::Complete, .. }));
        assert!(matches!(reflect_global(&h, &v, &ltm, false), ReflectionDelta::Global { status: TaskStatus::Incomplete, .. }));
        let mut busy = ltm.clone();
        busy.add_remaining("Export");
        let d = reflect_global(&h, &v, &busy, true);
        assert!(matches!(d, ReflectionDelta::Global { status: TaskStatus::Incomplete, .. }));
        assert!(apply_reflection(&ShortTermMemory::initial(), &busy, &d).is_ok());
    }
}
