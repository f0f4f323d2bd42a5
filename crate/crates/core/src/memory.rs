//! Dual memory: a short-term record of the previous step and a long-term
//! record of cumulative progress, plus reflection deltas that edit them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::grounding::GroundingFeatures;

/// Placeholder for short-term fields before any step has happened.
pub const NONE: &str = "NONE";
pub const KEY_STATE_CAPACITY: usize = 16;
pub const PITFALL_CAPACITY: usize = 8;

pub const STM_HEADING: &str = "SHORT_TERM_MEMORY (what happened in the previous step):";
pub const LTM_HEADING: &str = "LONG_TERM_MEMORY (cumulative knowledge and progress):";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemoryError {
    #[error("previous screen, action and feedback must be all present or all absent")]
    MixedPresence,
    #[error("feedback {0} is outside [0, 1]")]
    FeedbackRange(String),
    #[error("malformed reflection delta: {0}")]
    MalformedDelta(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortTermMemory {
    pub last_action: String,
    pub last_observation: String,
    pub last_lesson: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_feedback: Option<f64>,
}

impl ShortTermMemory {
    pub fn initial() -> Self {
        Self {
            last_action: NONE.into(),
            last_observation: NONE.into(),
            last_lesson: NONE.into(),
            last_feedback: None,
        }
    }

    pub fn is_initial(&self) -> bool {
        *self == Self::initial()
    }
}

impl Default for ShortTermMemory {
    fn default() -> Self {
        Self::initial()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyState {
    pub step: usize,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongTermMemory {
    pub overall_progress: String,
    pub completed_subtasks: Vec<String>,
    pub remaining_subtasks: Vec<String>,
    pub known_pitfalls: Vec<String>,
    #[serde(default)]
    pub key_states: Vec<KeyState>,
}

impl Default for LongTermMemory {
    fn default() -> Self {
        Self {
            overall_progress: "not started".into(),
            completed_subtasks: Vec::new(),
            remaining_subtasks: Vec::new(),
            known_pitfalls: Vec::new(),
            key_states: Vec::new(),
        }
    }
}

impl LongTermMemory {
    /// Insert into the completed set and drop the item from remaining.
    pub fn complete_subtask(&mut self, item: &str) {
        if !self.completed_subtasks.iter().any(|c| c == item) {
            self.completed_subtasks.push(item.to_string());
        }
        self.remaining_subtasks.retain(|r| r != item);
    }

    /// Insert into the remaining set unless already completed.
    pub fn add_remaining(&mut self, item: &str) {
        if !self.completed_subtasks.iter().any(|c| c == item) && !self.remaining_subtasks.iter().any(|r| r == item) {
            self.remaining_subtasks.push(item.to_string());
        }
    }

    /// Record a pitfall; the oldest is evicted beyond capacity.
    pub fn add_pitfall(&mut self, item: &str) {
        if self.known_pitfalls.iter().any(|p| p == item) {
            return;
        }
        self.known_pitfalls.push(item.to_string());
        if self.known_pitfalls.len() > PITFALL_CAPACITY {
            let excess = self.known_pitfalls.len() - PITFALL_CAPACITY;
            self.known_pitfalls.drain(..excess);
        }
    }

    fn push_key_state(&mut self, step: usize, summary: String) {
        self.key_states.retain(|k| k.step < step);
        self.key_states.push(KeyState { step, summary });
        if self.key_states.len() > KEY_STATE_CAPACITY {
            let excess = self.key_states.len() - KEY_STATE_CAPACITY;
            self.key_states.drain(..excess);
        }
    }
}

/// Project the previous step into short-term memory. Only the step right
/// before the current one can be passed; older history has no way in.
///
/// `lesson` is the critic's note on that step, if any.
pub fn stm_update(
    prev_screen: Option<&str>,
    prev_action: Option<&Action>,
    prev_feedback: Option<f64>,
    lesson: Option<&str>,
) -> Result<ShortTermMemory, MemoryError> {
    match (prev_screen, prev_action, prev_feedback) {
        (None, None, None) => Ok(ShortTermMemory::initial()),
        (Some(screen), Some(action), Some(r)) => {
            if !(0.0..=1.0).contains(&r) {
                return Err(MemoryError::FeedbackRange(r.to_string()));
            }
            Ok(ShortTermMemory {
                last_action: action.render(),
                last_observation: screen.to_string(),
                last_lesson: lesson.filter(|l| !l.trim().is_empty()).unwrap_or(NONE).to_string(),
                last_feedback: Some(r),
            })
        }
        _ => Err(MemoryError::MixedPresence),
    }
}

/// Fold the current short-term record and grounding into long-term memory
/// for `step`. Subtask sets and pitfalls pass through untouched.
pub fn ltm_update(prev: &LongTermMemory, stm: &ShortTermMemory, features: &GroundingFeatures, step: usize) -> LongTermMemory {
    let mut next = prev.clone();
    if stm.is_initial() && features.is_empty() {
        return next;
    }
    let mut summary = if stm.is_initial() {
        "start".to_string()
    } else {
        match stm.last_feedback {
            Some(r) => format!("after {} (feedback {r:.2})", stm.last_action),
            None => format!("after {}", stm.last_action),
        }
    };
    if !features.is_empty() {
        summary.push_str(&format!(
            "; grounding: {} detections, {} ocr tokens, {} crops, {} template matches",
            features.detections.len(),
            features.tokens.len(),
            features.crops.len(),
            features.matches.len()
        ));
    }
    next.push_key_state(step, summary);
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Complete,
    Incomplete,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Complete => "complete",
            TaskStatus::Incomplete => "incomplete",
        }
    }
}

/// An edit produced by one of the three reflectors. `Action` deltas touch
/// only short-term memory, the other two only long-term memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "lowercase")]
pub enum ReflectionDelta {
    Action {
        lesson: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        observation: Option<String>,
    },
    Trajectory {
        #[serde(default)]
        completed: Vec<String>,
        #[serde(default)]
        remaining: Vec<String>,
        #[serde(default)]
        pitfalls: Vec<String>,
    },
    Global {
        status: TaskStatus,
        #[serde(default)]
        missing_steps: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        summary: Option<String>,
    },
}

impl ReflectionDelta {
    pub fn level(&self) -> &'static str {
        match self {
            ReflectionDelta::Action { .. } => "action",
            ReflectionDelta::Trajectory { .. } => "trajectory",
            ReflectionDelta::Global { .. } => "global",
        }
    }

    pub fn targets_stm(&self) -> bool {
        matches!(self, ReflectionDelta::Action { .. })
    }

    pub fn check(&self) -> Result<(), MemoryError> {
        let bad = |m: &str| Err(MemoryError::MalformedDelta(m.to_string()));
        let blank = |items: &[String]| items.iter().any(|s| s.trim().is_empty());
        match self {
            ReflectionDelta::Action { lesson, observation } => {
                if lesson.trim().is_empty() {
                    return bad("empty lesson");
                }
                if observation.as_ref().is_some_and(|o| o.trim().is_empty()) {
                    return bad("empty observation");
                }
            }
            ReflectionDelta::Trajectory {
                completed,
                remaining,
                pitfalls,
            } => {
                if blank(completed) || blank(remaining) || blank(pitfalls) {
                    return bad("empty subtask or pitfall entry");
                }
                if completed.iter().any(|c| remaining.contains(c)) {
                    return bad("subtask listed as both completed and remaining");
                }
            }
            ReflectionDelta::Global {
                status, missing_steps, summary,
            } => {
                if blank(missing_steps) {
                    return bad("empty missing step");
                }
                if *status == TaskStatus::Complete && !missing_steps.is_empty() {
                    return bad("status complete with missing steps");
                }
                if summary.as_ref().is_some_and(|s| s.trim().is_empty()) {
                    return bad("empty summary");
                }
            }
        }
        Ok(())
    }
}

/// Apply a delta. The memory the delta does not target is returned as an
/// unmodified clone.
pub fn apply_reflection(
    stm: &ShortTermMemory,
    ltm: &LongTermMemory,
    delta: &ReflectionDelta,
) -> Result<(ShortTermMemory, LongTermMemory), MemoryError> {
    delta.check()?;
    match delta {
        ReflectionDelta::Action { lesson, observation } => {
            let mut s = stm.clone();
            s.last_lesson = lesson.clone();
            if let Some(o) = observation {
                s.last_observation = o.clone();
            }
            Ok((s, ltm.clone()))
        }
        ReflectionDelta::Trajectory {
            completed,
            remaining,
            pitfalls,
        } => {
            let mut l = ltm.clone();
            for c in completed {
                l.complete_subtask(c);
            }
            for r in remaining {
                l.add_remaining(r);
            }
            for p in pitfalls {
                l.add_pitfall(p);
            }
            Ok((stm.clone(), l))
        }
        ReflectionDelta::Global {
            status,
            missing_steps,
            summary,
        } => {
            if *status == TaskStatus::Complete && !ltm.remaining_subtasks.is_empty() {
                return Err(MemoryError::MalformedDelta("status complete while subtasks remain".into()));
            }
            let mut l = ltm.clone();
            let mut progress = status.as_str().to_string();
            if let Some(s) = summary {
                progress.push_str(": ");
                progress.push_str(s);
            }
            if !missing_steps.is_empty() {
                progress.push_str(&format!(" (missing: {})", missing_steps.join(", ")));
            }
            l.overall_progress = progress;
            Ok((stm.clone(), l))
        }
    }
}

/// Render both memories under their headings as pretty JSON. A disabled
/// memory renders as `{}`.
pub fn render_memory_context(stm: &ShortTermMemory, ltm: &LongTermMemory, use_stm: bool, use_ltm: bool) -> String {
    let stm_json = if use_stm { pretty(stm) } else { "{}".to_string() };
    let ltm_json = if use_ltm { pretty(ltm) } else { "{}".to_string() };
    format!("{STM_HEADING}\n{stm_json}\n\n{LTM_HEADING}\n{ltm_json}")
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("memory records serialize")
}

/// Recover the records from a rendered fragment. A disabled (`{}`) memory
/// comes back as `None`.
pub fn parse_memory_context(text: &str) -> Result<(Option<ShortTermMemory>, Option<LongTermMemory>), String> {
    let s = text.find(STM_HEADING).ok_or("short-term heading missing")?;
    let l = text.find(LTM_HEADING).ok_or("long-term heading missing")?;
    if l < s {
        return Err("headings out of order".into());
    }
    let stm_text = text[s + STM_HEADING.len()..l].trim();
    let ltm_text = first_json_value(text[l + LTM_HEADING.len()..].trim_start())?;
    let stm = match stm_text {
        "{}" => None,
        t => Some(serde_json::from_str(t).map_err(|e| format!("short-term memory: {e}"))?),
    };
    let ltm = match ltm_text {
        "{}" => None,
        t => Some(serde_json::from_str(t).map_err(|e| format!("long-term memory: {e}"))?),
    };
    Ok((stm, ltm))
}

fn first_json_value(text: &str) -> Result<&str, String> {
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<serde_json::Value>();
    match stream.next() {
        Some(Ok(_)) => Ok(&text[..stream.byte_offset()]),
        Some(Err(e)) => Err(format!("long-term memory: {e}")),
        None => Err("long-term memory: empty".into()),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_step_is_none() {
        let stm = stm_update(None, None, None, None).unwrap();
        assert_eq!(stm, ShortTermMemory::initial());
        let ctx = render_memory_context(&stm, &LongTermMemory::default(), true, true);
        assert_eq!(ctx.matches("\"NONE\"").count(), 3);
        assert_eq!(ctx.matches(STM_HEADING).count(), 1);
        assert_eq!(ctx.matches(LTM_HEADING).count(), 1);
    }

    #[test]
    fn projection_of_previous_step() {
        let a = Action::click("Save");
        let stm = stm_update(Some("x_3"), Some(&a), Some(1.0), None).unwrap();
        assert_eq!(stm.last_action, "CLICK(target=\"Save\")");
        assert_eq!(stm.last_feedback, Some(1.0));
        assert_eq!(stm.last_lesson, NONE);
        let hinted = stm_update(Some("x_3"), Some(&a), Some(0.0), Some("use SEGMENT")).unwrap();
        assert_eq!(hinted.last_lesson, "use SEGMENT");
    }

    #[test]
    fn mixed_presence_and_range() {
        let a = Action::complete();
        assert_eq!(stm_update(None, Some(&a), None, None), Err(MemoryError::MixedPresence));
        assert_eq!(stm_update(Some("x"), None, Some(1.0), None), Err(MemoryError::MixedPresence));
        assert!(matches!(
            stm_update(Some("x"), Some(&a), Some(1.5), None),
            Err(MemoryError::FeedbackRange(_))
        ));
    }

    #[test]
    fn vacuous_ltm_update() {
        let ltm = LongTermMemory::default();
        let next = ltm_update(&ltm, &ShortTermMemory::initial(), &GroundingFeatures::default(), 1);
        assert_eq!(next, ltm);
    }

    #[test]
    fn ltm_update_appends_increasing_key_states_and_keeps_subtasks() {
        let mut ltm = LongTermMemory::default();
        ltm.complete_subtask("Load MRI data");
        let stm = stm_update(Some("s"), Some(&Action::click("Load")), Some(1.0), None).unwrap();
        for step in 2..=30 {
            ltm = ltm_update(&ltm, &stm, &GroundingFeatures::default(), step);
        }
        assert_eq!(ltm.key_states.len(), KEY_STATE_CAPACITY);
        assert_eq!(ltm.key_states.first().unwrap().step, 15);
        assert!(ltm.key_states.windows(2).all(|w| w[0].step < w[1].step));
        assert_eq!(ltm.completed_subtasks, vec!["Load MRI data"]);
    }

    #[test]
    fn completing_twice_appears_once() {
        let mut ltm = LongTermMemory::default();
        ltm.complete_subtask("Open study");
        ltm.complete_subtask("Open study");
        assert_eq!(ltm.completed_subtasks, vec!["Open study"]);
    }

    #[test]
    fn pitfall_capacity_matches_truncated_oracle() {
        let inserts: Vec<String> = (0..9).map(|i| format!("pitfall {i}")).collect();
        let mut ltm = LongTermMemory::default();
        for p in &inserts {
            ltm.add_pitfall(p);
        }
        let oracle: Vec<String> = inserts[inserts.len() - PITFALL_CAPACITY..].to_vec();
        assert_eq!(ltm.known_pitfalls, oracle);
        assert!(!ltm.known_pitfalls.contains(&"pitfall 0".to_string()));
    }

    #[test]
    fn action_delta_touches_only_stm() {
        let stm = ShortTermMemory::initial();
        let ltm = LongTermMemory::default();
        let d = ReflectionDelta::Action {
            lesson: "CLICK had no visible effect".into(),
            observation: None,
        };
        let (s, l) = apply_reflection(&stm, &ltm, &d).unwrap();
        assert_eq!(s.last_lesson, "CLICK had no visible effect");
        assert_eq!(l, ltm);
    }

    #[test]
    fn trajectory_delta_moves_subtask() {
        let mut ltm = LongTermMemory::default();
        ltm.add_remaining("Load MRI data");
        ltm.add_remaining("Export results");
        let d = ReflectionDelta::Trajectory {
            completed: vec!["Load MRI data".into()],
            remaining: vec![],
            pitfalls: vec![],
        };
        let stm = ShortTermMemory::initial();
        let (s, l) = apply_reflection(&stm, &ltm, &d).unwrap();
        assert_eq!(s, stm);
        assert_eq!(l.completed_subtasks, vec!["Load MRI data"]);
        assert_eq!(l.remaining_subtasks, vec!["Export results"]);
    }

    #[test]
    fn global_incomplete_mentions_status() {
        let mut ltm = LongTermMemory::default();
        ltm.add_remaining("Export results");
        let d = ReflectionDelta::Global {
            status: TaskStatus::Incomplete,
            missing_steps: vec!["Export results".into()],
            summary: None,
        };
        let (_, l) = apply_reflection(&ShortTermMemory::initial(), &ltm, &d).unwrap();
        assert!(l.overall_progress.contains("incomplete"));
        let premature = ReflectionDelta::Global {
            status: TaskStatus::Complete,
            missing_steps: vec![],
            summary: None,
        };
        assert!(apply_reflection(&ShortTermMemory::initial(), &ltm, &premature).is_err());
    }

    #[test]
    fn malformed_deltas() {
        let stm = ShortTermMemory::initial();
        let ltm = LongTermMemory::default();
        for d in [
            ReflectionDelta::Action {
                lesson: " ".into(),
                observation: None,
            },
            ReflectionDelta::Trajectory {
                completed: vec!["a".into()],
                remaining: vec!["a".into()],
                pitfalls: vec![],
            },
            ReflectionDelta::Global {
                status: TaskStatus::Complete,
                missing_steps: vec!["x".into()],
                summary: None,
            },
        ] {
            assert!(matches!(apply_reflection(&stm, &ltm, &d), Err(MemoryError::MalformedDelta(_))));
        }
    }

    #[test]
    fn delta_json_is_level_tagged() {
        let d: ReflectionDelta = serde_json::from_str(r#"{"level":"action","lesson":"l"}"#).unwrap();
        assert!(d.targets_stm());
        assert_eq!(d.level(), "action");
    }

    #[test]
    fn disabled_memories_render_empty() {
        let ctx = render_memory_context(&ShortTermMemory::initial(), &LongTermMemory::default(), false, false);
        assert!(!ctx.contains("NONE"));
        assert_eq!(parse_memory_context(&ctx).unwrap(), (None, None));
    }

    fn text() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z0-9 \"\\\\]{0,12}"
    }

    pub(crate) fn arb_stm() -> impl Strategy<Value = ShortTermMemory> {
        (text(), text(), text(), proptest::option::of(0.0f64..=1.0)).prop_map(|(a, o, l, f)| ShortTermMemory {
            last_action: a,
            last_observation: o,
            last_lesson: l,
            last_feedback: f,
        })
    }

    pub(crate) fn arb_ltm() -> impl Strategy<Value = LongTermMemory> {
        (
            text(),
            proptest::collection::vec(text(), 0..4),
            proptest::collection::vec(text(), 0..4),
            proptest::collection::vec(text(), 0..10),
            0usize..20,
        )
            .prop_map(|(p, c, r, pit, k)| {
                let mut l = LongTermMemory {
                    overall_progress: p,
                    ..Default::default()
                };
                for x in &c {
                    l.complete_subtask(x);
                }
                for x in &r {
                    l.add_remaining(x);
                }
                for x in &pit {
                    l.add_pitfall(x);
                }
                for step in 1..=k {
                    l.push_key_state(step, format!("state {step}"));
                }
                l
            })
    }

    pub(crate) fn arb_delta() -> impl Strategy<Value = ReflectionDelta> {
        prop_oneof![
            (text(), proptest::option::of(text())).prop_map(|(lesson, observation)| ReflectionDelta::Action { lesson, observation }),
            (
                proptest::collection::vec(text(), 0..3),
                proptest::collection::vec(text(), 0..3),
                proptest::collection::vec(text(), 0..3)
            )
                .prop_map(|(completed, remaining, pitfalls)| {
                    let remaining = remaining.into_iter().filter(|r| !completed.contains(r)).collect();
                    ReflectionDelta::Trajectory {
                        completed,
                        remaining,
                        pitfalls,
                    }
                }),
            (proptest::collection::vec(text(), 0..3), proptest::option::of(text())).prop_map(|(missing_steps, summary)| {
                ReflectionDelta::Global {
                    status: TaskStatus::Incomplete,
                    missing_steps,
                    summary,
                }
            }),
        ]
    }

    proptest! {
        #[test]
        fn routing_and_disjointness(stm in arb_stm(), ltm in arb_ltm(), deltas in proptest::collection::vec(arb_delta(), 1..8)) {
            let (mut s, mut l) = (stm, ltm);
            for d in &deltas {
                let (s2, l2) = apply_reflection(&s, &l, d).unwrap();
                if d.targets_stm() {
                    prop_assert_eq!(&l2, &l);
                } else {
                    prop_assert_eq!(&s2, &s);
                }
                prop_assert!(l2.completed_subtasks.iter().all(|c| !l2.remaining_subtasks.contains(c)));
                prop_assert!(l2.known_pitfalls.len() <= PITFALL_CAPACITY);
                s = s2;
                l = l2;
            }
        }

        #[test]
        fn render_parse_round_trip(stm in arb_stm(), ltm in arb_ltm()) {
            let ctx = render_memory_context(&stm, &ltm, true, true);
            prop_assert_eq!(parse_memory_context(&ctx).unwrap(), (Some(stm), Some(ltm)));
        }

    }
}
