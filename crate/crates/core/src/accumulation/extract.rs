use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::serialize::{serialize_trajectory, trajectory_images, RolloutContext};
use super::{AccumulationError, AccumulationSettings};
use crate::gateway::{templates, Gateway, ModelRole, PromptRegistry};
use crate::inference::render_bullets;
use crate::knowledge::{validate_experience_with, ExperienceEntry, ExperienceId, KnowledgeOp, OpKind, SkillDocument, WireOp};
use crate::textutil::{extract_last_json, JsonShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub task_id: String,
    pub rollout_index: usize,
    pub summary_text: String,
    /// Provided experiences the summary refers to by id.
    pub cited_experience_ids: Vec<ExperienceId>,
    pub correct: bool,
    pub final_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillFragment {
    pub markdown_text: String,
    pub document: SkillDocument,
}

fn cited_ids(text: &str, provided: &[ExperienceEntry]) -> Vec<ExperienceId> {
    let provided: BTreeSet<ExperienceId> = provided.iter().map(|e| e.id).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for token in text.split(|c: char| !c.is_ascii_alphanumeric()) {
        if let Ok(id) = token.parse::<ExperienceId>() {
            if provided.contains(&id) && seen.insert(id) {
                out.push(id);
            }
        }
    }
    out
}

pub fn summarize_rollout(
    gateway: &Gateway,
    registry: &PromptRegistry,
    ctx: &RolloutContext<'_>,
    settings: &AccumulationSettings,
) -> Result<TrajectorySummary, AccumulationError> {
    let trajectory = serialize_trajectory(ctx);
    let prompt = registry.render(templates::ROLLOUT_SUMMARY, &[("trajectory", &trajectory)])?;
    let images = trajectory_images(ctx.task, ctx.trajectory, settings.max_images);
    let completion =
        gateway.complete_prompt(ModelRole::Kb, templates::ROLLOUT_SUMMARY, prompt, images, settings.summary)?;
    let summary_text = completion.text.trim().to_string();
    Ok(TrajectorySummary {
        task_id: ctx.task.task_id.clone(),
        rollout_index: ctx.trajectory.rollout,
        cited_experience_ids: cited_ids(&summary_text, ctx.used_experiences),
        summary_text,
        correct: ctx.correct,
        final_answer: ctx.trajectory.final_answer.clone(),
    })
}

/// Accepts a completion only if, after trimming, it is a SKILL.md document.
pub fn parse_skill_completion(text: &str) -> Result<SkillFragment, AccumulationError> {
    let trimmed = text.trim();
    if !trimmed.starts_with("---") {
        return Err(AccumulationError::MalformedFragment("completion does not start with ---".into()));
    }
    let document = SkillDocument::parse(trimmed).map_err(|e| AccumulationError::MalformedFragment(e.to_string()))?;
    Ok(SkillFragment { markdown_text: trimmed.to_string(), document })
}

pub fn extract_skill_fragment(
    gateway: &Gateway,
    registry: &PromptRegistry,
    ctx: &RolloutContext<'_>,
    settings: &AccumulationSettings,
) -> Result<SkillFragment, AccumulationError> {
    let trajectory = serialize_trajectory(ctx);
    let ground_truth = ctx.task.ground_truth.as_deref().unwrap_or("");
    let prompt = registry.render(
        templates::GENERATE_RAW_SKILL,
        &[("trajectory", &trajectory), ("ground_truth", ground_truth)],
    )?;
    let images = trajectory_images(ctx.task, ctx.trajectory, settings.max_images);
    let completion =
        gateway.complete_prompt(ModelRole::Kb, templates::GENERATE_RAW_SKILL, prompt, images, settings.summary)?;
    parse_skill_completion(&completion.text)
}

/// Parsed critique: retained ops plus a note for every dropped item.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Critique {
    pub ops: Vec<KnowledgeOp>,
    pub dropped: Vec<String>,
}

/// Reads the trailing JSON array of a critique completion. Only add and
/// modify ops are kept; the list is cut to `max_ops` before text
/// validation, so the result never exceeds `max_ops`.
pub fn parse_critique(text: &str, max_ops: usize, max_words: usize) -> Result<Critique, AccumulationError> {
    let Some(Value::Array(items)) = extract_last_json(text, JsonShape::Array) else {
        return Err(AccumulationError::NoJsonFound);
    };
    let mut out = Critique::default();
    let mut candidates = Vec::new();
    for item in items {
        let op = serde_json::from_value::<WireOp>(item.clone())
            .map_err(|e| e.to_string())
            .and_then(|w| KnowledgeOp::from_wire(&w).map_err(|e| e.to_string()));
        match op {
            Ok(op) if matches!(op.kind(), OpKind::Add | OpKind::Modify) => candidates.push(op),
            Ok(op) => out.dropped.push(format!("{} is not allowed in a critique", op.kind().as_str())),
            Err(e) => out.dropped.push(format!("unparseable op {item}: {e}")),
        }
    }
    if candidates.len() > max_ops {
        out.dropped.push(format!("{} ops beyond the limit of {max_ops}", candidates.len() - max_ops));
        candidates.truncate(max_ops);
    }
    for op in candidates {
        let text = op.text().unwrap_or_default();
        let check = validate_experience_with(text, max_words);
        if check.is_ok() {
            out.ops.push(op);
        } else {
            out.dropped.push(format!("{:?} experience: {text}", check));
        }
    }
    for note in &out.dropped {
        tracing::warn!(note = %note, "critique op dropped");
    }
    Ok(out)
}

fn render_summaries(summaries: &[TrajectorySummary]) -> String {
    summaries
        .iter()
        .map(|s| {
            format!(
                "Rollout {} ({}, answer: {}):\n{}",
                s.rollout_index + 1,
                if s.correct { "correct" } else { "incorrect" },
                s.final_answer.as_deref().unwrap_or("none"),
                s.summary_text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One text-only critique call over all summaries of a task.
#[allow(clippy::too_many_arguments)]
pub fn critique_rollouts(
    gateway: &Gateway,
    registry: &PromptRegistry,
    summaries: &[TrajectorySummary],
    question: &str,
    ground_truth: &str,
    experiences_used: &[ExperienceEntry],
    settings: &AccumulationSettings,
) -> Result<Critique, AccumulationError> {
    let used = render_bullets(experiences_used.iter().map(|e| (e.id, e.text.as_str())));
    let max_ops = settings.max_ops.to_string();
    let prompt = registry.render(
        templates::CROSS_ROLLOUT_CRITIQUE,
        &[
            ("question", question),
            ("summaries", &render_summaries(summaries)),
            ("experiences", &used),
            ("groundtruth", ground_truth),
            ("max_ops", &max_ops),
        ],
    )?;
    let completion = gateway.complete_prompt(
        ModelRole::Kb,
        templates::CROSS_ROLLOUT_CRITIQUE,
        prompt,
        Vec::new(),
        settings.critique,
    )?;
    parse_critique(&completion.text, settings.max_ops, settings.max_experience_words)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{Matcher, ScriptedBackend, ToolCall};
    use crate::inference::UsageHistory;
    use crate::media::ImagePayload;
    use crate::retry::RetryPolicy;
    use crate::runtime::{TaskInstance, TerminatedReason, Trajectory, Turn};
    use crate::tools::ToolResult;

    pub(crate) const FRAGMENT: &str = "---\nname: bar-reading\ndescription: Read bar charts.\nversion: 1.0.0\n---\n\n# Bar Reading\n\n## Workflow\n1. **Crop**: isolate the axis.\n\n## Tool Templates\n```python\ncrop = original_image.crop((0, 0, 10, 10))\n# keep this\n```";

    fn gateway(kb: ScriptedBackend) -> (Arc<ScriptedBackend>, Gateway) {
        let kb = Arc::new(kb);
        (kb.clone(), Gateway::new(Arc::new(ScriptedBackend::new()), kb).with_retry(RetryPolicy::immediate(1)))
    }

    fn two_turns() -> Trajectory {
        let call = |name: &str, args| ToolCall { id: format!("c-{name}"), name: name.into(), arguments: args };
        let mut obs = ToolResult::ok("cropped");
        obs.images.push(crate::media::NamedImage { name: "tool_image_1".into(), payload: ImagePayload::png(vec![1]) });
        Trajectory {
            task_id: "t".into(),
            rollout: 1,
            turns: vec![
                Turn {
                    t: 0,
                    assistant_text: "Crop first.".into(),
                    tool_call: Some(call("code_interpreter", serde_json::json!({"code": "crop()"}))),
                    observation: Some(obs),
                    notice: None,
                },
                Turn {
                    t: 1,
                    assistant_text: "Search.".into(),
                    tool_call: Some(call("web_search", serde_json::json!({"query": "bar chart"}))),
                    observation: Some(ToolResult::ok("1. Hit")),
                    notice: None,
                },
                Turn { t: 2, assistant_text: "<answer>7</answer>".into(), tool_call: None, observation: None, notice: None },
            ],
            final_answer: Some("7".into()),
            terminated_reason: TerminatedReason::Answered,
            token_usage: Default::default(),
            error: None,
            transcript: vec![],
        }
    }

    #[test]
    fn summary_prompt_carries_turns_and_images() {
        let reg = PromptRegistry::builtin();
        let (kb, g) = gateway(ScriptedBackend::new().reply(Matcher::Any, "  Turn 1 applied E3.  "));
        let task = TaskInstance::new("t", "How tall?").with_ground_truth("7").with_images(vec![ImagePayload::png(vec![0])]);
        let tr = two_turns();
        let usage = UsageHistory::empty("t");
        let used = vec![ExperienceEntry {
            id: ExperienceId(3),
            text: "Crop first.".into(),
            condition: None,
            action: None,
            created_at: 3,
            source_task_id: None,
        }];
        let ctx = RolloutContext { task: &task, trajectory: &tr, correct: true, usage: &usage, used_experiences: &used };
        let s = summarize_rollout(&g, &reg, &ctx, &AccumulationSettings::default()).unwrap();
        assert_eq!(s.summary_text, "Turn 1 applied E3.");
        assert_eq!(s.cited_experience_ids, vec![ExperienceId(3)]);
        let req = &kb.requests()[0];
        assert_eq!(req.params.max_tokens, 12_288);
        assert_eq!(req.params.temperature, 0.6);
        let text = &req.messages[0].text;
        let open = text.find("<trajectory>").unwrap();
        let close = text.find("</trajectory>").unwrap();
        let inner = &text[open..close];
        assert!(inner.contains(r#"Tool call: code_interpreter {"code":"crop()"}"#));
        assert!(inner.contains(r#"Tool call: web_search {"query":"bar chart"}"#));
        let names: Vec<_> = req.messages[0].images.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, vec!["original_image", "tool_image_1"]);
    }

    #[test]
    fn fragments_must_be_skill_documents() {
        let f = parse_skill_completion(&format!("\n{FRAGMENT}\n")).unwrap();
        assert_eq!(f.document.metadata.version.to_string(), "1.0.0");
        let fence = |s: &str| {
            let start = s.find("```python").unwrap();
            let end = s.rfind("```").unwrap() + 3;
            s[start..end].to_string()
        };
        assert_eq!(fence(&f.document.render()), fence(FRAGMENT));
        assert!(matches!(
            parse_skill_completion(&format!("Here is the skill:\n{FRAGMENT}")),
            Err(AccumulationError::MalformedFragment(_))
        ));
    }

    #[test]
    fn critique_parsing() {
        let c = parse_critique(r#"Reasoning. [{"option":"add","experience":"When X, do Y."}]"#, 4, 64).unwrap();
        assert_eq!(c.ops, vec![KnowledgeOp::Add { text: "When X, do Y.".into() }]);

        let six: Vec<Value> = (0..6).map(|i| serde_json::json!({"option": "add", "experience": format!("tip {i}")})).collect();
        let c = parse_critique(&serde_json::to_string(&six).unwrap(), 4, 64).unwrap();
        assert_eq!(c.ops.len(), 4);

        let c = parse_critique(r#"[{"option":"modify","experience":"Better.","modified_from":"E17"}]"#, 4, 64).unwrap();
        assert_eq!(c.ops, vec![KnowledgeOp::Modify { text: "Better.".into(), target: ExperienceId(17) }]);

        let long = "word ".repeat(65);
        let mixed = serde_json::json!([
            {"option": "delete", "deleted_id": "E1"},
            {"option": "add", "experience": long},
            {"option": "add"},
            {"option": "add", "experience": "Fine."}
        ]);
        let c = parse_critique(&mixed.to_string(), 4, 64).unwrap();
        assert_eq!(c.ops, vec![KnowledgeOp::Add { text: "Fine.".into() }]);
        assert_eq!(c.dropped.len(), 3);

        assert!(matches!(parse_critique("no json here", 4, 64), Err(AccumulationError::NoJsonFound)));
    }

    #[test]
    fn critique_is_text_only_with_used_experiences() {
        let reg = PromptRegistry::builtin();
        let (kb, g) = gateway(ScriptedBackend::new().reply(Matcher::Any, "[]"));
        let summaries = vec![TrajectorySummary {
            task_id: "t".into(),
            rollout_index: 0,
            summary_text: "Did things.".into(),
            cited_experience_ids: vec![],
            correct: false,
            final_answer: Some("5".into()),
        }];
        let used = vec![ExperienceEntry {
            id: ExperienceId(2),
            text: "Zoom.".into(),
            condition: None,
            action: None,
            created_at: 2,
            source_task_id: None,
        }];
        let c = critique_rollouts(&g, &reg, &summaries, "Q", "7", &used, &AccumulationSettings::default()).unwrap();
        assert!(c.ops.is_empty());
        let req = &kb.requests()[0];
        assert!(req.messages[0].images.is_empty());
        let text = &req.messages[0].text;
        assert!(text.contains("<summaries>Rollout 1 (incorrect, answer: 5):\nDid things.</summaries>"));
        assert!(text.contains("<experiences_used>[E2] Zoom.</experiences_used>"));
        assert!(text.contains("at most 4 updates"));
    }
}
