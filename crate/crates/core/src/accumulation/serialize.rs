use std::fmt::Write as _;

use crate::inference::UsageHistory;
use crate::knowledge::ExperienceEntry;
use crate::media::NamedImage;
use crate::runtime::{TaskInstance, Trajectory};

/// What a knowledge-model prompt needs to know about one rollout besides
/// its turns.
pub struct RolloutContext<'a> {
    pub task: &'a TaskInstance,
    pub trajectory: &'a Trajectory,
    pub correct: bool,
    pub usage: &'a UsageHistory,
    /// Entries behind `usage.retrieved_ids`, in the same order.
    pub used_experiences: &'a [ExperienceEntry],
}

/// Text placed inside the `<trajectory>` tags.
pub fn serialize_trajectory(ctx: &RolloutContext<'_>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Question: {}", ctx.task.query);
    let _ = writeln!(out, "Correct answer: {}", ctx.task.ground_truth.as_deref().unwrap_or(""));
    if !ctx.used_experiences.is_empty() {
        out.push_str("Experiences provided:\n");
        for e in ctx.used_experiences {
            let _ = writeln!(out, "[{}] {}", e.id, e.text);
        }
    }
    if !ctx.usage.adapted_skill_text.is_empty() {
        let _ = writeln!(out, "Skill provided:\n{}", ctx.usage.adapted_skill_text.trim_end());
    }
    for turn in &ctx.trajectory.turns {
        let _ = writeln!(out, "\n## Turn {}", turn.t + 1);
        if !turn.assistant_text.trim().is_empty() {
            let _ = writeln!(out, "Assistant: {}", turn.assistant_text.trim());
        }
        if let Some(call) = &turn.tool_call {
            let _ = writeln!(out, "Tool call: {} {}", call.name, call.arguments);
        }
        if let Some(obs) = &turn.observation {
            let _ = writeln!(out, "Observation: {}", obs.text_body.trim_end());
            let names = obs.image_names();
            if !names.is_empty() {
                let _ = writeln!(out, "Images produced: {}", names.join(", "));
            }
        }
        if let Some(notice) = &turn.notice {
            let _ = writeln!(out, "Notice: {notice}");
        }
    }
    let answer = ctx.trajectory.final_answer.as_deref().unwrap_or("(none)");
    let _ = writeln!(out, "\nFinal answer: {answer}");
    let _ = write!(out, "Outcome: {}", if ctx.correct { "correct" } else { "incorrect" });
    out
}

/// Input images followed by tool-produced images in production order,
/// capped at `max`.
pub fn trajectory_images(task: &TaskInstance, trajectory: &Trajectory, max: usize) -> Vec<NamedImage> {
    let mut images = task.named_images(max);
    for turn in &trajectory.turns {
        if let Some(obs) = &turn.observation {
            images.extend(obs.images.iter().cloned());
        }
    }
    images.truncate(max);
    images
}
