//! Deterministic stand-in policies driven by the step reference.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::output::{predicted_from_action, ActorStepOutput, ImageInfo, Reasoning, RequestedTool, ScreenGrounding};
use super::{BackendError, PolicyBackend, PolicyRequest, ReplyFormat, StepReference};
use crate::action::{Action, ActionKind};
use crate::digest::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ScriptedPolicy {
    /// Always the label.
    Oracle,
    /// The label, except with probability `flip` per attempt a wrong kind.
    Noisy { flip: f64 },
    /// A uniformly random kind with placeholder arguments.
    UniformRandom,
    /// Never the label's kind.
    AlwaysWrong,
    /// The label except at the listed `(task id, step)` sites, where every
    /// attempt is wrong.
    Faults { at: BTreeSet<FaultSite> },
    /// Replies with prose and never with the requested format.
    ProseOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultSite {
    pub task: String,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedActor {
    pub policy: ScriptedPolicy,
    pub seed: u64,
}

/// A valid action of `kind` with fixed stand-in arguments.
pub fn placeholder_action(kind: ActionKind) -> Action {
    let b = Action::builder(kind);
    match kind {
        ActionKind::Click => b.target("Cancel"),
        ActionKind::Scroll => b.scroll_units(1),
        ActionKind::Text => b.text("text"),
        _ => b,
    }
    .build()
    .expect("placeholder arguments are valid")
}

fn wrong_kind(label: ActionKind, rng: &mut ChaCha8Rng) -> ActionKind {
    let others: Vec<ActionKind> = ActionKind::ALL.into_iter().filter(|k| *k != label).collect();
    others[rng.random_range(0..others.len())]
}

impl ScriptedActor {
    pub fn new(policy: ScriptedPolicy, seed: u64) -> Self {
        Self { policy, seed }
    }

    fn rng(&self, tag: &str, r: &StepReference) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(
            self.seed,
            &[tag, &r.task_id, &r.step.to_string(), &r.attempt.to_string()],
        ))
    }

    /// The action this policy commits to for the referenced attempt.
    pub fn decide(&self, r: &StepReference) -> Action {
        match &self.policy {
            ScriptedPolicy::Oracle | ScriptedPolicy::ProseOnly => r.label.clone(),
            ScriptedPolicy::Noisy { flip } => {
                let mut rng = self.rng("noisy", r);
                if rng.random_bool(flip.clamp(0.0, 1.0)) {
                    placeholder_action(wrong_kind(r.label.kind(), &mut rng))
                } else {
                    r.label.clone()
                }
            }
            ScriptedPolicy::UniformRandom => {
                let mut rng = self.rng("uniform", r);
                placeholder_action(ActionKind::ALL[rng.random_range(0..ActionKind::ALL.len())])
            }
            ScriptedPolicy::AlwaysWrong => {
                let mut rng = self.rng("wrong", r);
                placeholder_action(wrong_kind(r.label.kind(), &mut rng))
            }
            ScriptedPolicy::Faults { at } => {
                if at.iter().any(|f| f.task == r.task_id && f.step == r.step) {
                    let mut rng = self.rng("fault", r);
                    placeholder_action(wrong_kind(r.label.kind(), &mut rng))
                } else {
                    r.label.clone()
                }
            }
        }
    }

    fn reply(&self, r: &StepReference, action: &Action) -> String {
        let tool_calls = action
            .target()
            .map(|t| {
                vec![RequestedTool {
                    tool: "visual_grounding".into(),
                    args: json!({ "query": t }),
                }]
            })
            .unwrap_or_default();
        ActorStepOutput {
            step: r.step,
            grounding: ScreenGrounding {
                current_screen_state: format!("screen at step {}", r.step),
                key_ui_elements: action.target().map(|t| vec![t.to_string()]).unwrap_or_default(),
                relevant_affordances: vec![action.kind().as_str().to_string()],
            },
            short_term_memory: json!({}),
            long_term_memory: json!({}),
            reasoning: Reasoning {
                tool_calls,
                why_next_action_is_correct_and_safe: "scripted policy".into(),
                why_it_aligns_with_user_goal: "scripted policy".into(),
                why_alternatives_are_wrong_or_risky: "scripted policy".into(),
            },
            tool_results: None,
            image_info: ImageInfo {
                step_num: r.step,
                has_image: true,
                image_data_uri: None,
            },
            predicted_next_action: predicted_from_action(action),
            action: action.clone(),
        }
        .to_reply()
    }
}

impl PolicyBackend for ScriptedActor {
    fn identity(&self) -> String {
        let name = match &self.policy {
            ScriptedPolicy::Oracle => "oracle".to_string(),
            ScriptedPolicy::Noisy { flip } => format!("noisy(flip={flip})"),
            ScriptedPolicy::UniformRandom => "uniform_random".to_string(),
            ScriptedPolicy::AlwaysWrong => "always_wrong".to_string(),
            ScriptedPolicy::Faults { at } => format!("faults({})", at.len()),
            ScriptedPolicy::ProseOnly => "prose_only".to_string(),
        };
        format!("scripted-actor:{name}:seed={}", self.seed)
    }

    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        let r = request
            .reference
            .as_ref()
            .ok_or_else(|| BackendError::Unsupported("scripted actors need a step reference".into()))?;
        let action = self.decide(r);
        if self.policy == ScriptedPolicy::ProseOnly {
            return Ok(format!("I think the next step is to {} now.", action.kind().as_str().to_lowercase()));
        }
        match request.format {
            ReplyFormat::ActionType => Ok(action.kind().as_str().to_string()),
            ReplyFormat::ActorJson => Ok(self.reply(r, &action)),
            ReplyFormat::CriticJson => Err(BackendError::Unsupported("scripted actors do not review proposals".into())),
        }
    }
}
