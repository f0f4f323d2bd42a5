//! Actor-side prompt templates. The instruction blocks are fixed text;
//! everything variable is filled in by the builders below.

use crate::action::ActionKind;
use crate::grounding::GroundingFeatures;
use crate::memory::{render_memory_context, LongTermMemory, ShortTermMemory};

pub const ACTOR_SYSTEM_PROMPT: &str = r#"You are the TARGET EXECUTION AGENT controlling a mobile/GUI environment step by step.

You can use VISUAL GROUNDING TOOLS to better understand the screen:
- object_detection: Find UI elements like buttons, icons, text fields
- visual_grounding: Find specific elements by text query (e.g., "Load Data button")
- depth_estimation: Understand UI hierarchy and layering
- edge_detection: Identify UI boundaries
- zoom_tool: Zoom into specific regions for detailed inspection

If you're uncertain about UI element locations or need precise coordinates, you MUST request tools in "reasoning.tool_calls". Tools will be executed and results provided back to you.

You MUST respond with EXACTLY ONE valid JSON list, no extra text, no explanations, no markdown fences.

Format:
[
  "Step {step_num}" : {
    "grounding": {
      "current_screen_state": "...",
      "key_ui_elements": ["...","..."],
      "relevant_affordances": ["..."]
    },
    "short_term_memory": {
      "last_action": "...",
      "last_observation": "...",
      "last_lesson": "..."
    },
    "long_term_memory": {
      "overall_progress": "...",
      "completed_subtasks": ["..."],
      "remaining_subtasks": ["..."],
      "known_pitfalls": ["..."]
    },
    "reasoning": {
    "tool_calls": [
    {"tool": "visual_grounding",
        "args": {
        "query": "Load Data button",
        "image_id": 0}},
        {"tool": "object_detection",
        "args": {"objects": ["button",
        "icon"]}}
      ],
      "why_next_action_is_correct_and_safe": "...",
      "why_it_aligns_with_user_goal": "...",
      "why_alternatives_are_wrong_or_risky": "..."
    },
    "tool_results": {
      "visual_grounding": {...},
      "object_detection": {...}
    },
    "image_info": {
      "step_num": {step_num},
      "has_image": true,
      "image_data_uri": "{image_data_uri}"
    },
    "predicted_next_action": {
      "tool_call": "ONE_OF_AVAILABLE_TOOLS",
      "target": "UI element/selector / coords to operate on",
      "target_id": "element_id_from_ui_tree",  # MUST use an ID from ui_tree if available
      "arguments": {
        "text_to_type": "...",
        "coords": [x, y],
        "extra": "..."
      }
    }
  }
]

Constraints:
1. "grounding": ONLY describe what is visible RIGHT NOW on THE CURRENT SCREEN. Do not invent elements.
2. "short_term_memory": ONLY summarize what happened in the immediately previous attempt (the last step), including last_action, what we observed, and the immediate lesson. If step {step_num} is the first step, use the given values (like "NONE").
3. "long_term_memory": Summarize cumulative progress in this task so far:
   - what subgoals are already done,
   - what remains,
   - known pitfalls (e.g. loops or dead ends we discovered),
   - overall_progress so far.
   If this is the first step, keep them minimal/empty.
4. "reasoning":
   - "tool_calls" (REQUIRED): You MUST call visual_grounding or object_detection if you need to interact with UI elements.
   - Explain why the chosen next action is safe, aligned with USER_GOAL, and better than other visible actions.
5. "tool_results" (OPTIONAL): Will be populated by system after tool execution.
6. "predicted_next_action":
   - tool_call MUST be one of AVAILABLE_TOOLS.
   - You MUST provide all arguments that tool needs (coords, text, selector, etc).
   - If ui_tree is available, you MUST use target_id from ui_tree instead of free-text target.
   - If ui_tree is not available, you MUST request visual_grounding in tool_calls.
7. DO NOT add any keys not listed.
8. DO NOT output anything except the JSON list described above.
9. NEVER guess coordinates - if you need coords, you MUST use visual_grounding tool first."#;

pub const ACTOR_CLOSING: &str =
    "Based on the USER_GOAL, AVAILABLE_TOOLS, SHORT_TERM_MEMORY, LONG_TERM_MEMORY,and the current screen, determine the next action.";

pub const BASELINE_SYSTEM_PROMPT: &str = r#"Given a screenshot and an instruction, provide the correct action.

Available Actions: {available_action_description}

IMPORTANT RULES — Choose the correct action based on what you see:

1. COMPLETE: Only allowed on the final step (step {total_steps}). Never use before the last step.

2. CLICK: Use when interacting with UI elements:
   - Buttons, menus, tool icons
   - Highlights appear on UI tools/icons, not on the medical scan
   - Used for navigating, selecting tools, opening menus

3. SEGMENT: Use when annotations appear on the medical scan:
   - Points, fiducials, masks, measurements
   - Lines, shapes, bounding boxes on MRI/CT images
   - If annotation is on the scan itself → SEGMENT, not CLICK

4. ZOOM: Use when magnification of the medical scan changes:
   - Scan becomes larger or smaller
   - Zoom percentage changes
   - No new annotations added

5. TEXT: Use when typing into input fields:
   - Cursor active in a text box
   - Text being entered

6. SCROLL: Use when vertical scrolling occurs:
   - Content moves up/down
   - Scrollbar changes
   - New content becomes visible

Current Step: {current_step} of {total_steps}

Grounding Context: {grounding_context}

Historical Actions: {history}

Instruction: Based on the screenshot and the available actions, provide the next step directly.

Output ONLY the action type: CLICK, SEGMENT, TEXT, SCROLL, or COMPLETE.

No coordinates.
No explanations.
COMPLETE only on the last step."#;

/// Rendered system and user text for one model call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub system: String,
    pub user: String,
}

impl PromptText {
    /// Both parts joined the way single-string backends receive them.
    pub fn joined(&self) -> String {
        if self.system.is_empty() {
            self.user.clone()
        } else {
            format!("{}\n\n{}", self.system, self.user)
        }
    }
}

/// Inputs of the actor prompt. Everything here must be derivable from steps
/// before the current one, plus the current screen.
#[derive(Debug, Clone)]
pub struct ActorContext<'a> {
    pub goal: &'a str,
    pub step: usize,
    /// Shown as "Step t of T" when present.
    pub total_hint: Option<usize>,
    pub features: &'a GroundingFeatures,
    pub stm: &'a ShortTermMemory,
    pub ltm: &'a LongTermMemory,
    pub use_stm: bool,
    pub use_ltm: bool,
    pub available: &'a [ActionKind],
    pub tool_hints: &'a [String],
}

pub fn format_available(kinds: &[ActionKind]) -> String {
    let names: Vec<&str> = kinds.iter().map(|k| k.as_str()).collect();
    let mut out = names.join(", ");
    for k in kinds {
        out.push_str(&format!("\n- {}: {}", k.as_str(), k.description()));
    }
    out
}

pub fn build_actor_prompt(ctx: &ActorContext<'_>) -> PromptText {
    assert!(ctx.step >= 1, "steps are 1-based");
    let memory = render_memory_context(ctx.stm, ctx.ltm, ctx.use_stm, ctx.use_ltm);
    let hints = if ctx.tool_hints.is_empty() {
        String::new()
    } else {
        let lines: Vec<String> = ctx.tool_hints.iter().map(|h| format!("- {h}")).collect();
        format!("TOOL_EFFECTIVENESS_HINTS:\n{}", lines.join("\n"))
    };
    let step_line = match ctx.total_hint {
        Some(total) => format!("Step {} of {}:", ctx.step, total),
        None => format!("Step {}:", ctx.step),
    };
    let user = format!(
        "USER_GOAL: {goal}\n\nAVAILABLE_TOOLS: {tools}\n\n{memory}\n{tool_context}\n{hints}\n\n{step_line}\n{ACTOR_CLOSING}",
        goal = ctx.goal,
        tools = format_available(ctx.available),
        tool_context = ctx.features.render(),
    );
    PromptText {
        system: ACTOR_SYSTEM_PROMPT.replace("{step_num}", &ctx.step.to_string()),
        user,
    }
}

#[derive(Debug, Clone)]
pub struct BaselineContext<'a> {
    pub goal: &'a str,
    pub step: usize,
    pub total: usize,
    pub features: &'a GroundingFeatures,
    /// Kinds of the steps before this one.
    pub history: &'a [ActionKind],
    pub available: &'a [ActionKind],
}

/// The zero-shot action-type prompt. The fixed template has no slot for
/// the goal, so it travels as the user part.
pub fn build_baseline_prompt(ctx: &BaselineContext<'_>) -> PromptText {
    let history = if ctx.history.is_empty() {
        "None".to_string()
    } else {
        ctx.history
            .iter()
            .enumerate()
            .map(|(i, k)| format!("{}. {}", i + 1, k))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let grounding = ctx.features.render();
    let system = BASELINE_SYSTEM_PROMPT
        .replace("{available_action_description}", &format_available(ctx.available))
        .replace("{current_step}", &ctx.step.to_string())
        .replace("{total_steps}", &ctx.total.to_string())
        .replace("{grounding_context}", grounding.trim_end())
        .replace("{history}", &history);
    PromptText {
        system,
        user: format!("Instruction: {}", ctx.goal),
    }
}
