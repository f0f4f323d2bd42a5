use crate::actor::PromptText;

pub const CRITIC_SYSTEM_PROMPT: &str = r#"You are the CRITIC / HIERARCHICAL REFLECTOR Agent

You must:
1. Judge whether the Target Agent's predicted_next_action was correct in practice.
2. Evaluate tool usage: Were appropriate tools called? Were results correctly interpreted?
3. Produce step-level reflection (reflection.action).
4. Produce trajectory-level reflection (reflection.trajectory).
5. Produce global task-level reflection (reflection.global).
6. Indicate action_correct as true/false.
7. If false, explain why_if_wrong and give hint_if_wrong.
8. Provide tool_evaluation with tools_used, tool_success, and tool_lessons.

CRITICAL FORMAT REQUIREMENTS:
- reflection.trajectory.completed_subtasks MUST be a JSON array of strings, e.g., ["Load MRI data", "Navigate to module"].
- reflection.trajectory.remaining_subtasks MUST be a JSON array of strings, e.g., ["Create segmentation", "Export results"].
- NEVER use strings or text descriptions in place of arrays.
- Each subtask should be a short, specific task description (1-5 words).
- Extract subtasks from the USER_GOAL based on actual progress made so far.
- completed_subtasks: List what has been accomplished based on steps taken.
- remaining_subtasks: List what still needs to be done based on remaining steps.

Subtask style:
- Each subtask should be short (1-5 words), specific, and actionable.
- Do not use long descriptive sentences; use short, specific task names.
- Based on the trajectory, identify which parts of the USER_GOAL have been completed.

CRITICAL COMPLETE ACTION RULES:
- The "COMPLETE" action can ONLY be used in the LAST STEP.
- If the agent used "COMPLETE" before the last step, mark action_correct as FALSE.
- The "COMPLETE" action should ONLY appear when all required subtasks are truly finished.
- Never mark a task as "complete" in reflection.global.status unless it is actually the final step and all objectives are achieved.
- If there are remaining_subtasks or missing_steps, the status MUST be "incomplete".

You MUST return EXACTLY ONE JSON object with the required keys including tool_evaluation. Do NOT include any text outside that JSON.

Evaluate both the ACTION and TOOL USAGE:
- Did the agent use appropriate tools?
- Were tool results correctly interpreted?
- Could better tools have been chosen?
- Did the tools help or hinder the action?"#;

pub const CRITIC_CLOSING: &str = "Now respond with the single JSON object exactly in the required format, including tool_evaluation.";

/// Inputs of the critic prompt, already rendered to text.
#[derive(Debug, Clone)]
pub struct CriticContext<'a> {
    pub goal: &'a str,
    pub step: usize,
    pub target_output: &'a str,
    pub tool_context: &'a str,
    pub memory_context: &'a str,
    pub ground_truth_after_action: &'a str,
    pub full_trajectory: &'a str,
}

pub fn build_critic_prompt(ctx: &CriticContext<'_>) -> PromptText {
    let user = format!(
        "USER_GOAL:\n{goal}\n\nTARGET_AGENT_STEP_OUTPUT (Step {step}):\n{output}\n\n{tools}{memory}\n\n\
         GROUND_TRUTH_AFTER_ACTION (what actually happened after executing predicted_next_action):\n{truth}\n\n\
         FULL_TRAJECTORY_SO_FAR (chronological summary of all steps so far, including this one):\n{trajectory}\n\n{CRITIC_CLOSING}",
        goal = ctx.goal,
        step = ctx.step,
        output = ctx.target_output,
        tools = ctx.tool_context,
        memory = ctx.memory_context,
        truth = ctx.ground_truth_after_action,
        trajectory = ctx.full_trajectory,
    );
    PromptText {
        system: CRITIC_SYSTEM_PROMPT.to_string(),
        user,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_present_in_order() {
        let p = build_critic_prompt(&CriticContext {
            goal: "g",
            step: 5,
            target_output: "{}",
            tool_context: "",
            memory_context: "M",
            ground_truth_after_action: "unavailable",
            full_trajectory: "Step 1: CLICK",
        });
        let order = [
            "USER_GOAL:\ng",
            "TARGET_AGENT_STEP_OUTPUT (Step 5):",
            "GROUND_TRUTH_AFTER_ACTION",
            "FULL_TRAJECTORY_SO_FAR",
            CRITIC_CLOSING,
        ];
        let mut at = 0;
        for part in order {
            let i = p.user[at..].find(part).unwrap_or_else(|| panic!("{part} missing or out of order"));
            at += i + part.len();
        }
    }
}
