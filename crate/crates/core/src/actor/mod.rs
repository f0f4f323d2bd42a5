//! The actor: prompt construction, the policy backend contract, reply
//! parsing with bounded re-asks, and execution of tools the actor requests.

mod output;
mod prompt;
mod remote;
mod scripted;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::action::{Action, Prediction};
use crate::grounding::wire::ToolResponse;
use crate::grounding::{GroundingBackend, ScreenView, ToolCall, ToolInvocation};

pub use output::{
    action_from_predicted, clean_reply, parse_action_type, parse_actor_output, predicted_from_action, ActorReply, ActorStepOutput, Cleanup,
    ImageInfo, PredictedNextAction, ProtocolError, Reasoning, RequestedTool, ScreenGrounding,
};
pub use prompt::{
    build_actor_prompt, build_baseline_prompt, format_available, ActorContext, BaselineContext, PromptText, ACTOR_CLOSING,
    ACTOR_SYSTEM_PROMPT, BASELINE_SYSTEM_PROMPT,
};
pub use remote::{RemotePolicyBackend, MODEL_API_KEY_ENV, MODEL_ENDPOINT_ENV};
pub use scripted::{placeholder_action, FaultSite, ScriptedActor, ScriptedPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend transport failed: {0}")]
    Transport(String),
    #[error("backend cannot serve this request: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub accepts_images: bool,
    pub reentrant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyFormat {
    ActorJson,
    ActionType,
    CriticJson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 2048,
            seed: None,
        }
    }
}

/// Ground truth about the step being asked, for scripted backends only.
/// Remote backends never see it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReference {
    pub task_id: String,
    pub step: usize,
    pub total: usize,
    pub label: Action,
    /// Revision number within the step, starting at 0.
    pub attempt: usize,
    /// Re-ask number within the attempt, starting at 0.
    pub reask: usize,
    /// The proposal under review, for critic requests.
    pub proposal: Option<Prediction>,
    /// Labels of earlier steps.
    pub history: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRequest {
    pub prompt: PromptText,
    pub images: Vec<PathBuf>,
    pub params: SamplingParams,
    pub format: ReplyFormat,
    pub reference: Option<StepReference>,
}

/// A text-in, text-out model. Scripted implementations must be pure
/// functions of the request and their seed.
pub trait PolicyBackend: Send + Sync {
    fn identity(&self) -> String;

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            accepts_images: false,
            reentrant: true,
        }
    }

    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActorError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("reply still invalid after {reasks} re-asks: {last}")]
    Unrepairable {
        reasks: usize,
        last: ProtocolError,
        replies: Vec<String>,
    },
}

/// A parsed actor reply together with everything it took to get it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub reply: ActorReply,
    /// Every raw reply in order; the last one is the one that parsed.
    pub raw: Vec<String>,
    pub cleanups: Vec<Cleanup>,
    pub reasks: usize,
}

impl Proposal {
    pub fn prediction(&self) -> Prediction {
        self.reply.prediction()
    }
}

pub(crate) fn reask_suffix(err: &ProtocolError, format: ReplyFormat) -> String {
    let shape = match format {
        ReplyFormat::ActorJson => "EXACTLY ONE valid JSON list in the required format",
        ReplyFormat::ActionType => "ONLY the action type",
        ReplyFormat::CriticJson => "EXACTLY ONE JSON object in the required format",
    };
    format!(
        "\n\nYOUR PREVIOUS RESPONSE WAS REJECTED ({}: {}). Respond again with {}.",
        err.code(),
        err,
        shape
    )
}

fn parse_reply(text: &str, format: ReplyFormat, step: usize) -> Result<(ActorReply, Vec<Cleanup>), ProtocolError> {
    match format {
        ReplyFormat::ActionType => parse_action_type(text).map(|(kind, c)| (ActorReply::ActionType { kind }, c)),
        _ => parse_actor_output(text, step).map(|(output, c)| (ActorReply::Structured { output: Box::new(output) }, c)),
    }
}

/// Ask the backend for a step reply. Invalid replies get up to `max_reasks`
/// follow-up requests carrying an explanation of the error.
pub fn propose_action(
    backend: &dyn PolicyBackend,
    request: &PolicyRequest,
    step: usize,
    max_reasks: usize,
) -> Result<Proposal, ActorError> {
    let mut req = request.clone();
    let mut raw = Vec::new();
    for reask in 0..=max_reasks {
        if let Some(r) = req.reference.as_mut() {
            r.reask = reask;
        }
        let text = backend.complete(&req)?;
        raw.push(text.clone());
        match parse_reply(&text, request.format, step) {
            Ok((reply, cleanups)) => {
                return Ok(Proposal {
                    reply,
                    raw,
                    cleanups,
                    reasks: reask,
                })
            }
            Err(e) if reask == max_reasks => {
                return Err(ActorError::Unrepairable {
                    reasks: max_reasks,
                    last: e,
                    replies: raw,
                })
            }
            Err(e) => req.prompt.user.push_str(&reask_suffix(&e, request.format)),
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Outcome of one actor-requested tool call, in wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResultEntry {
    pub seq: usize,
    pub tool: String,
    pub args: Value,
    pub response: ToolResponse,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolRun {
    /// Successfully decoded calls, ready for aggregation.
    pub invocations: Vec<ToolInvocation>,
    pub results: Vec<ToolResultEntry>,
}

/// Run the tools an actor asked for. Failures, including unsupported tool
/// names, are recorded as `{ok: false}` entries and never abort.
pub fn execute_tool_calls(calls: &[RequestedTool], tools: &dyn GroundingBackend, screen: &ScreenView<'_>, first_seq: usize) -> ToolRun {
    let mut run = ToolRun::default();
    for (i, c) in calls.iter().enumerate() {
        let seq = first_seq + i;
        match ToolCall::from_parts(&c.tool, &c.args) {
            Ok(call) => {
                let inv = ToolInvocation::run(seq, call, tools, screen);
                run.results.push(ToolResultEntry {
                    seq,
                    tool: c.tool.clone(),
                    args: c.args.clone(),
                    response: inv.response(),
                });
                run.invocations.push(inv);
            }
            Err(e) => run.results.push(ToolResultEntry {
                seq,
                tool: c.tool.clone(),
                args: c.args.clone(),
                response: ToolResponse::failure(&e),
            }),
        }
    }
    run
}
