use serde::{Deserialize, Serialize};

use crate::gateway::{templates, Gateway, GenerationParams, ModelRole, PromptRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraderKind {
    ExactNormalized,
    Containment,
    ModelJudge,
}

impl GraderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GraderKind::ExactNormalized => "exact_normalized",
            GraderKind::Containment => "containment",
            GraderKind::ModelJudge => "model_judge",
        }
    }
}

impl std::str::FromStr for GraderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact_normalized" => Ok(GraderKind::ExactNormalized),
            "containment" => Ok(GraderKind::Containment),
            "model_judge" => Ok(GraderKind::ModelJudge),
            other => Err(format!("unknown grader {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grade {
    pub correct: bool,
    /// Set when the grade could not be determined and defaulted to false.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

impl Grade {
    fn of(correct: bool) -> Self {
        Self { correct, flagged: false }
    }
}

/// Casefold, trim, collapse internal whitespace.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// What the model judge needs beyond the two strings.
pub struct Judge<'a> {
    pub gateway: &'a Gateway,
    pub registry: &'a PromptRegistry,
    pub params: GenerationParams,
}

impl Judge<'_> {
    pub fn default_params() -> GenerationParams {
        GenerationParams::new(0.0, 1.0, 1024)
    }
}

/// Reads a yes/no verdict from the first word of the reply.
pub fn parse_verdict(reply: &str) -> Option<bool> {
    let word: String = reply
        .trim()
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

pub fn grade(
    answer: Option<&str>,
    ground_truth: &str,
    question: &str,
    kind: GraderKind,
    judge: Option<&Judge<'_>>,
) -> Grade {
    let Some(answer) = answer else {
        return Grade::of(false);
    };
    let (a, g) = (normalize(answer), normalize(ground_truth));
    if g.is_empty() {
        return Grade { correct: false, flagged: true };
    }
    match kind {
        GraderKind::ExactNormalized => Grade::of(a == g),
        GraderKind::Containment => Grade::of(a.contains(&g)),
        GraderKind::ModelJudge => {
            let Some(judge) = judge else {
                tracing::warn!("model_judge requested without a judge; grading false");
                return Grade { correct: false, flagged: true };
            };
            let prompt = judge.registry.render(
                templates::JUDGE_ANSWER,
                &[("question", question), ("ground_truth", ground_truth), ("answer", answer)],
            );
            let reply = prompt.and_then(|p| {
                judge.gateway.complete_prompt(ModelRole::Kb, templates::JUDGE_ANSWER, p, Vec::new(), judge.params)
            });
            match reply.map(|c| parse_verdict(&c.text)) {
                Ok(Some(v)) => Grade::of(v),
                Ok(None) => {
                    tracing::warn!("judge reply was neither yes nor no; grading false");
                    Grade { correct: false, flagged: true }
                }
                Err(e) => {
                    tracing::warn!(error = %e, "judge call failed; grading false");
                    Grade { correct: false, flagged: true }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{Matcher, Reply, ScriptedBackend};
    use crate::retry::RetryPolicy;

    #[test]
    fn string_graders() {
        assert!(grade(Some("Purple"), "purple", "", GraderKind::ExactNormalized, None).correct);
        assert!(grade(Some("  dark \n purple "), "Dark Purple", "", GraderKind::ExactNormalized, None).correct);
        assert!(!grade(Some("the answer is purple"), "purple", "", GraderKind::ExactNormalized, None).correct);
        assert!(grade(Some("the answer is purple"), "purple", "", GraderKind::Containment, None).correct);
        assert!(!grade(None, "purple", "", GraderKind::Containment, None).correct);
        assert!(grade(Some("x"), "  ", "", GraderKind::Containment, None).flagged);
    }

    #[test]
    fn model_judge() {
        let kb = Arc::new(
            ScriptedBackend::new()
                .reply(Matcher::template(templates::JUDGE_ANSWER), "Yes.")
                .reply(Matcher::Any, "no")
                .step(Matcher::Any, Reply::Unavailable, 1),
        );
        let g = Gateway::new(Arc::new(ScriptedBackend::new()), kb.clone()).with_retry(RetryPolicy::immediate(1));
        let reg = PromptRegistry::builtin();
        let judge = Judge { gateway: &g, registry: &reg, params: Judge::default_params() };
        assert_eq!(grade(Some("violet"), "purple", "colour?", GraderKind::ModelJudge, Some(&judge)), Grade::of(true));
        assert_eq!(grade(Some("red"), "purple", "colour?", GraderKind::ModelJudge, Some(&judge)), Grade::of(false));
        assert_eq!(
            grade(Some("red"), "purple", "colour?", GraderKind::ModelJudge, Some(&judge)),
            Grade { correct: false, flagged: true }
        );
        assert!(kb.requests()[0].messages[0].text.contains("Candidate answer: violet"));
    }
}
