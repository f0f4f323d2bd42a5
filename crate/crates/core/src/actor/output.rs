//! Parsing and validation of actor replies.
//!
//! The canonical reply is `[{"Step N": {...}}]`. A first, always-on cleanup
//! tier strips code fences and surrounding prose, rewrites the
//! `["Step N": {...}]` shape shown in the instruction block into valid JSON,
//! and wraps a bare object. Anything still invalid is a [`ProtocolError`].

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::action::{Action, ActionError, ActionKind, Prediction};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("empty reply")]
    Empty,
    #[error("reply is not valid JSON: {0}")]
    MalformedJson(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("unexpected key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` has the wrong shape: {reason}")]
    Schema { key: String, reason: String },
    #[error("`{key}` must be a JSON array of strings")]
    ArrayTyping { key: String },
    #[error("unknown action kind `{0}`")]
    UnknownActionKind(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("reply is for step {found}, expected step {expected}")]
    StepMismatch { expected: usize, found: usize },
    #[error("no action type found in reply")]
    NoActionType,
    #[error("reply names several action types: {0}")]
    AmbiguousActionType(String),
    #[error("verdict violates its own rules: {0}")]
    Inconsistent(String),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Empty => "empty_reply",
            ProtocolError::MalformedJson(_) => "malformed_json",
            ProtocolError::MissingKey(_) => "missing_key",
            ProtocolError::UnknownKey(_) => "unknown_key",
            ProtocolError::Schema { .. } => "schema",
            ProtocolError::ArrayTyping { .. } => "array_typing",
            ProtocolError::UnknownActionKind(_) => "unknown_action_kind",
            ProtocolError::InvalidAction(_) => "invalid_action",
            ProtocolError::StepMismatch { .. } => "step_mismatch",
            ProtocolError::NoActionType => "no_action_type",
            ProtocolError::AmbiguousActionType(_) => "ambiguous_action_type",
            ProtocolError::Inconsistent(_) => "inconsistent",
        }
    }
}

/// A cleanup applied before a reply parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cleanup {
    StrippedFence,
    StrippedProse,
    RewroteStepList,
    WrappedObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenGrounding {
    pub current_screen_state: String,
    pub key_ui_elements: Vec<String>,
    pub relevant_affordances: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestedTool {
    pub tool: String,
    #[serde(default)]
    pub args: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reasoning {
    pub tool_calls: Vec<RequestedTool>,
    pub why_next_action_is_correct_and_safe: String,
    pub why_it_aligns_with_user_goal: String,
    pub why_alternatives_are_wrong_or_risky: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageInfo {
    pub step_num: usize,
    pub has_image: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_data_uri: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedNextAction {
    pub tool_call: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

/// One step of actor output after validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorStepOutput {
    pub step: usize,
    pub grounding: ScreenGrounding,
    pub short_term_memory: Value,
    pub long_term_memory: Value,
    pub reasoning: Reasoning,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_results: Option<Value>,
    pub image_info: ImageInfo,
    pub predicted_next_action: PredictedNextAction,
    /// The predicted action in the shared vocabulary.
    pub action: Action,
}

const REQUIRED_KEYS: [&str; 6] = [
    "grounding",
    "short_term_memory",
    "long_term_memory",
    "reasoning",
    "image_info",
    "predicted_next_action",
];
const OPTIONAL_KEYS: [&str; 1] = ["tool_results"];
const STM_ECHO_KEYS: [&str; 4] = ["last_action", "last_observation", "last_lesson", "last_feedback"];
const LTM_ECHO_KEYS: [&str; 5] = [
    "overall_progress",
    "completed_subtasks",
    "remaining_subtasks",
    "known_pitfalls",
    "key_states",
];
const ARGUMENT_KEYS: [&str; 5] = ["text_to_type", "coords", "extra", "scroll_units", "region"];

impl ActorStepOutput {
    /// Canonical reply text for this output, i.e. `[{"Step N": {...}}]`.
    pub fn to_reply(&self) -> String {
        let mut body = Map::new();
        body.insert("grounding".into(), to_value(&self.grounding));
        body.insert("short_term_memory".into(), self.short_term_memory.clone());
        body.insert("long_term_memory".into(), self.long_term_memory.clone());
        body.insert("reasoning".into(), to_value(&self.reasoning));
        if let Some(t) = &self.tool_results {
            body.insert("tool_results".into(), t.clone());
        }
        body.insert("image_info".into(), to_value(&self.image_info));
        body.insert("predicted_next_action".into(), to_value(&self.predicted_next_action));
        let mut step = Map::new();
        step.insert(format!("Step {}", self.step), Value::Object(body));
        serde_json::to_string_pretty(&Value::Array(vec![Value::Object(step)])).expect("serializable")
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// Express an action in the reply vocabulary.
pub fn predicted_from_action(action: &Action) -> PredictedNextAction {
    let mut arguments = Map::new();
    if let Some(t) = action.text() {
        arguments.insert("text_to_type".into(), Value::from(t));
    }
    if let Some((x, y)) = action.coords() {
        arguments.insert("coords".into(), Value::from(vec![x, y]));
    }
    if let Some(n) = action.scroll_units() {
        arguments.insert("scroll_units".into(), Value::from(n));
    }
    if let Some(r) = action.region() {
        arguments.insert("region".into(), Value::from(vec![r.x, r.y, r.w, r.h]));
    }
    PredictedNextAction {
        tool_call: action.kind().as_str().to_string(),
        target: action.target().map(str::to_string),
        target_id: None,
        arguments,
    }
}

fn is_placeholder(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "..."
}

/// Convert the reply's action object into an [`Action`]. Arguments that do
/// not apply to the chosen kind are ignored rather than rejected, since the
/// reply template lists them for every kind.
pub fn action_from_predicted(p: &PredictedNextAction) -> Result<Action, ProtocolError> {
    let kind: ActionKind = p
        .tool_call
        .parse()
        .map_err(|_| ProtocolError::UnknownActionKind(p.tool_call.clone()))?;
    if let Some(k) = p.arguments.keys().find(|k| !ARGUMENT_KEYS.contains(&k.as_str())) {
        return Err(ProtocolError::UnknownKey(format!("predicted_next_action.arguments.{k}")));
    }
    let schema = |key: &str, reason: &str| ProtocolError::Schema {
        key: format!("predicted_next_action.arguments.{key}"),
        reason: reason.to_string(),
    };
    let mut b = Action::builder(kind);
    if kind == ActionKind::Complete {
        return b.build().map_err(invalid);
    }
    if let Some(t) = p.target.as_deref().filter(|t| !is_placeholder(t)) {
        b = b.target(t);
    }
    if let Some(c) = p.arguments.get("coords").filter(|v| !v.is_null()) {
        match c.as_array().map(|a| a.iter().map(Value::as_u64).collect::<Option<Vec<_>>>()) {
            Some(Some(xy)) if xy.len() == 2 => b = b.coords(xy[0] as u32, xy[1] as u32),
            _ => return Err(schema("coords", "expected [x, y] with non-negative integers")),
        }
    }
    match kind {
        ActionKind::Text => {
            if let Some(t) = p.arguments.get("text_to_type").and_then(Value::as_str).filter(|t| !is_placeholder(t)) {
                b = b.text(t);
            }
        }
        ActionKind::Scroll => {
            if let Some(v) = p.arguments.get("scroll_units").filter(|v| !v.is_null()) {
                let n = v.as_i64().ok_or_else(|| schema("scroll_units", "expected an integer"))?;
                b = b.scroll_units(n);
            }
        }
        ActionKind::Zoom | ActionKind::Segment => {
            if let Some(r) = p.arguments.get("region").filter(|v| !v.is_null()) {
                match r.as_array().map(|a| a.iter().map(Value::as_u64).collect::<Option<Vec<_>>>()) {
                    Some(Some(v)) if v.len() == 4 => b = b.region(BoundingBox::new(v[0] as u32, v[1] as u32, v[2] as u32, v[3] as u32)),
                    _ => return Err(schema("region", "expected [x, y, w, h]")),
                }
            }
        }
        _ => {}
    }
    b.build().map_err(invalid)
}

fn invalid(e: ActionError) -> ProtocolError {
    ProtocolError::InvalidAction(e.to_string())
}

fn strip_fences(text: &str) -> Option<String> {
    let t = text.trim();
    let start = t.find("```")?;
    let after = &t[start + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.rfind("```").unwrap_or(body.len());
    Some(body[..end].trim().to_string())
}

/// Cut the text down to the span from the first `[`/`{` to its last
/// matching closer kind.
fn strip_prose(text: &str) -> Option<String> {
    let t = text.trim();
    let start = t.find(['[', '{'])?;
    let closer = if t[start..].starts_with('[') { ']' } else { '}' };
    let end = t.rfind(closer)?;
    (end > start).then(|| t[start..=end].to_string())
}

/// `["Step 3": {...}]` is what the instruction block shows; make it JSON.
fn rewrite_step_list(text: &str) -> Option<String> {
    let t = text.trim();
    let inner = t.strip_prefix('[')?.strip_suffix(']')?.trim_start();
    if !inner.starts_with('"') {
        return None;
    }
    let key_end = inner[1..].find('"')? + 2;
    if !inner[key_end..].trim_start().starts_with(':') {
        return None;
    }
    Some(format!("[{{{inner}}}]"))
}

/// Apply the cleanup tier and return the reply as a JSON value.
pub fn clean_reply(text: &str) -> Result<(Value, Vec<Cleanup>), ProtocolError> {
    let mut cleanups = Vec::new();
    let mut current = text.trim().to_string();
    if current.is_empty() {
        return Err(ProtocolError::Empty);
    }
    if let Some(unfenced) = strip_fences(&current) {
        cleanups.push(Cleanup::StrippedFence);
        current = unfenced;
    }
    let mut parsed = serde_json::from_str::<Value>(&current);
    if parsed.is_err() {
        if let Some(cut) = strip_prose(&current) {
            if cut != current {
                cleanups.push(Cleanup::StrippedProse);
                current = cut;
                parsed = serde_json::from_str(&current);
            }
        }
    }
    if parsed.is_err() {
        if let Some(rewritten) = rewrite_step_list(&current) {
            if let Ok(v) = serde_json::from_str(&rewritten) {
                cleanups.push(Cleanup::RewroteStepList);
                parsed = Ok(v);
            }
        }
    }
    parsed
        .map(|v| (v, cleanups))
        .map_err(|e| ProtocolError::MalformedJson(e.to_string()))
}

fn step_number(key: &str) -> Option<usize> {
    let rest = key.trim().strip_prefix("Step")?.trim();
    rest.parse().ok()
}

fn check_echo(key: &str, v: &Value, allowed: &[&str]) -> Result<(), ProtocolError> {
    let obj = v.as_object().ok_or_else(|| ProtocolError::Schema {
        key: key.into(),
        reason: "expected an object".into(),
    })?;
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ProtocolError::UnknownKey(format!("{key}.{k}"))),
        None => Ok(()),
    }
}

fn field<T: for<'de> Deserialize<'de>>(body: &Map<String, Value>, key: &str) -> Result<T, ProtocolError> {
    let v = body.get(key).ok_or_else(|| ProtocolError::MissingKey(key.into()))?;
    serde_json::from_value(v.clone()).map_err(|e| {
        let msg = e.to_string();
        if let Some(rest) = msg.strip_prefix("missing field `") {
            let name = rest.split('`').next().unwrap_or_default();
            ProtocolError::MissingKey(format!("{key}.{name}"))
        } else if let Some(rest) = msg.strip_prefix("unknown field `") {
            let name = rest.split('`').next().unwrap_or_default();
            ProtocolError::UnknownKey(format!("{key}.{name}"))
        } else if msg.contains("expected a sequence") {
            ProtocolError::ArrayTyping { key: key.into() }
        } else {
            ProtocolError::Schema {
                key: key.into(),
                reason: msg,
            }
        }
    })
}

/// Parse and validate one actor reply for `expected_step`.
pub fn parse_actor_output(text: &str, expected_step: usize) -> Result<(ActorStepOutput, Vec<Cleanup>), ProtocolError> {
    let (value, mut cleanups) = clean_reply(text)?;
    let (step_key, body) = match value {
        Value::Array(mut items) => {
            if items.len() != 1 {
                return Err(ProtocolError::Schema {
                    key: "reply".into(),
                    reason: format!("expected exactly one step entry, found {}", items.len()),
                });
            }
            single_step(items.remove(0))?
        }
        obj @ Value::Object(_) => {
            cleanups.push(Cleanup::WrappedObject);
            single_step(obj)?
        }
        _ => {
            return Err(ProtocolError::Schema {
                key: "reply".into(),
                reason: "expected a JSON list".into(),
            })
        }
    };
    if let Some(found) = step_key {
        if found != expected_step {
            return Err(ProtocolError::StepMismatch {
                expected: expected_step,
                found,
            });
        }
    }
    for k in body.keys() {
        if !REQUIRED_KEYS.contains(&k.as_str()) && !OPTIONAL_KEYS.contains(&k.as_str()) {
            return Err(ProtocolError::UnknownKey(k.clone()));
        }
    }
    for k in REQUIRED_KEYS {
        if !body.contains_key(k) {
            return Err(ProtocolError::MissingKey(k.into()));
        }
    }
    let grounding: ScreenGrounding = field(&body, "grounding")?;
    check_echo("short_term_memory", &body["short_term_memory"], &STM_ECHO_KEYS)?;
    check_echo("long_term_memory", &body["long_term_memory"], &LTM_ECHO_KEYS)?;
    let reasoning: Reasoning = field(&body, "reasoning")?;
    let image_info: ImageInfo = field(&body, "image_info")?;
    if image_info.step_num != expected_step {
        return Err(ProtocolError::StepMismatch {
            expected: expected_step,
            found: image_info.step_num,
        });
    }
    let predicted: PredictedNextAction = field(&body, "predicted_next_action")?;
    let action = action_from_predicted(&predicted)?;
    Ok((
        ActorStepOutput {
            step: expected_step,
            grounding,
            short_term_memory: body["short_term_memory"].clone(),
            long_term_memory: body["long_term_memory"].clone(),
            reasoning,
            tool_results: body.get("tool_results").cloned(),
            image_info,
            predicted_next_action: predicted,
            action,
        },
        cleanups,
    ))
}

/// Split `{"Step N": body}` into its step number and body. A body given
/// directly (no step key) is accepted too.
fn single_step(v: Value) -> Result<(Option<usize>, Map<String, Value>), ProtocolError> {
    let Value::Object(obj) = v else {
        return Err(ProtocolError::Schema {
            key: "reply".into(),
            reason: "step entry must be an object".into(),
        });
    };
    if obj.len() == 1 {
        let (k, inner) = obj.iter().next().expect("one entry");
        if let Some(n) = step_number(k) {
            return match inner {
                Value::Object(body) => Ok((Some(n), body.clone())),
                _ => Err(ProtocolError::Schema {
                    key: k.clone(),
                    reason: "step body must be an object".into(),
                }),
            };
        }
    }
    if obj.contains_key("predicted_next_action") {
        return Ok((None, obj));
    }
    Err(ProtocolError::MissingKey("Step N".into()))
}

/// Parse a reply to the action-type-only prompt.
pub fn parse_action_type(text: &str) -> Result<(ActionKind, Vec<Cleanup>), ProtocolError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(ProtocolError::Empty);
    }
    let (t, mut cleanups) = match strip_fences(t) {
        Some(s) => (s, vec![Cleanup::StrippedFence]),
        None => (t.to_string(), Vec::new()),
    };
    let bare = t.trim().trim_end_matches(['.', '!']).trim_matches(['"', '\'', '`', '*']);
    if let Ok(k) = bare.parse::<ActionKind>() {
        return Ok((k, cleanups));
    }
    let mut found: Vec<ActionKind> = Vec::new();
    for word in t.split(|c: char| !c.is_ascii_alphabetic()) {
        if let Some(k) = ActionKind::ALL.into_iter().find(|k| k.as_str() == word) {
            if !found.contains(&k) {
                found.push(k);
            }
        }
    }
    match found.as_slice() {
        [] => Err(ProtocolError::NoActionType),
        [k] => {
            cleanups.push(Cleanup::StrippedProse);
            Ok((*k, cleanups))
        }
        many => Err(ProtocolError::AmbiguousActionType(
            many.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "),
        )),
    }
}

/// Parsed actor reply in either prompt format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum ActorReply {
    Structured { output: Box<ActorStepOutput> },
    ActionType { kind: ActionKind },
}

impl ActorReply {
    pub fn prediction(&self) -> Prediction {
        match self {
            ActorReply::Structured { output } => Prediction::Action {
                action: output.action.clone(),
            },
            ActorReply::ActionType { kind } => Prediction::KindOnly { kind: *kind },
        }
    }

    pub fn tool_calls(&self) -> &[RequestedTool] {
        match self {
            ActorReply::Structured { output } => &output.reasoning.tool_calls,
            ActorReply::ActionType { .. } => &[],
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) fn sample_output(step: usize, action: &Action) -> ActorStepOutput {
        ActorStepOutput {
            step,
            grounding: ScreenGrounding {
                current_screen_state: "viewer with toolbar".into(),
                key_ui_elements: vec!["Save button".into()],
                relevant_affordances: vec!["click Save".into()],
            },
            short_term_memory: json!({"last_action": "NONE", "last_observation": "NONE", "last_lesson": "NONE"}),
            long_term_memory: json!({"overall_progress": "not started", "completed_subtasks": [], "remaining_subtasks": [], "known_pitfalls": []}),
            reasoning: Reasoning {
                tool_calls: vec![RequestedTool {
                    tool: "visual_grounding".into(),
                    args: json!({"query": "Save"}),
                }],
                why_next_action_is_correct_and_safe: "visible".into(),
                why_it_aligns_with_user_goal: "needed".into(),
                why_alternatives_are_wrong_or_risky: "none apply".into(),
            },
            tool_results: None,
            image_info: ImageInfo {
                step_num: step,
                has_image: true,
                image_data_uri: None,
            },
            predicted_next_action: predicted_from_action(action),
            action: action.clone(),
        }
    }

    #[test]
    fn canonical_reply_round_trips() {
        for a in [
            Action::click("Save"),
            Action::complete(),
            Action::builder(ActionKind::Text).target("Patient ID").text("MRN-1").build().unwrap(),
            Action::builder(ActionKind::Scroll).scroll_units(-3).build().unwrap(),
            Action::builder(ActionKind::Segment)
                .target("Axial view")
                .region(BoundingBox::new(10, 10, 20, 30))
                .build()
                .unwrap(),
        ] {
            let out = sample_output(4, &a);
            let (parsed, cleanups) = parse_actor_output(&out.to_reply(), 4).unwrap();
            assert_eq!(parsed, out);
            assert!(cleanups.is_empty());
        }
    }

    #[test]
    fn fenced_and_prose_wrapped_replies_are_cleaned() {
        let reply = sample_output(2, &Action::click("Save")).to_reply();
        let fenced = format!("```json\n{reply}\n```");
        let (_, c) = parse_actor_output(&fenced, 2).unwrap();
        assert_eq!(c, vec![Cleanup::StrippedFence]);
        let prose = format!("Here is my answer:\n{reply}\nThanks.");
        let (_, c) = parse_actor_output(&prose, 2).unwrap();
        assert_eq!(c, vec![Cleanup::StrippedProse]);
    }

    #[test]
    fn instruction_shape_is_rewritten() {
        let reply = sample_output(3, &Action::click("Save")).to_reply();
        let v: Value = serde_json::from_str(&reply).unwrap();
        let body = v[0]["Step 3"].to_string();
        let shape = format!("[\n  \"Step 3\" : {body}\n]");
        let (out, c) = parse_actor_output(&shape, 3).unwrap();
        assert_eq!(c, vec![Cleanup::RewroteStepList]);
        assert_eq!(out.action, Action::click("Save"));
        let bare = format!("{{\"Step 3\": {body}}}");
        assert_eq!(parse_actor_output(&bare, 3).unwrap().1, vec![Cleanup::WrappedObject]);
    }

    #[test]
    fn schema_violations() {
        let reply = sample_output(1, &Action::click("Save")).to_reply();
        let mut v: Value = serde_json::from_str(&reply).unwrap();
        v[0]["Step 1"].as_object_mut().unwrap().remove("predicted_next_action");
        let err = parse_actor_output(&v.to_string(), 1).unwrap_err();
        assert_eq!(err, ProtocolError::MissingKey("predicted_next_action".into()));

        let mut v: Value = serde_json::from_str(&reply).unwrap();
        v[0]["Step 1"]["confidence"] = json!(0.9);
        assert_eq!(parse_actor_output(&v.to_string(), 1).unwrap_err().code(), "unknown_key");

        let mut v: Value = serde_json::from_str(&reply).unwrap();
        v[0]["Step 1"]["predicted_next_action"]["tool_call"] = json!("DRAG");
        assert_eq!(
            parse_actor_output(&v.to_string(), 1).unwrap_err(),
            ProtocolError::UnknownActionKind("DRAG".into())
        );

        assert_eq!(parse_actor_output(&reply, 2).unwrap_err().code(), "step_mismatch");
        assert_eq!(parse_actor_output("I would click Save.", 1).unwrap_err().code(), "malformed_json");
        assert_eq!(parse_actor_output("   ", 1).unwrap_err(), ProtocolError::Empty);
    }

    #[test]
    fn placeholder_target_is_absent() {
        let mut p = predicted_from_action(&Action::click("x"));
        p.target = Some("".into());
        assert_eq!(action_from_predicted(&p).unwrap(), Action::builder(ActionKind::Click).build().unwrap());
        p.tool_call = "TEXT".into();
        assert_eq!(action_from_predicted(&p).unwrap_err().code(), "invalid_action");
    }

    #[test]
    fn action_type_replies() {
        assert_eq!(parse_action_type("CLICK").unwrap().0, ActionKind::Click);
        assert_eq!(parse_action_type(" segment.\n").unwrap().0, ActionKind::Segment);
        assert_eq!(parse_action_type("The answer is ZOOM").unwrap().0, ActionKind::Zoom);
        assert_eq!(parse_action_type("CLICK or TEXT").unwrap_err().code(), "ambiguous_action_type");
        assert_eq!(parse_action_type("press the button").unwrap_err().code(), "no_action_type");
    }
}
