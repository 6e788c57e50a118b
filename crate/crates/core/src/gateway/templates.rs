//! Prompt template registry.
//!
//! Templates are plain text with `{slot}` placeholders, where a slot name is
//! `[a-z_][a-z0-9_]*`. Any other brace (JSON examples in the prompts) is
//! literal text. Rendering substitutes bound values verbatim in one pass.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::GatewayError;

pub const DIRECT_COT: &str = "direct_cot";
pub const MULTI_TOOL_AGENT_SEARCH: &str = "multi_tool_agent_search";
pub const GENERATE_RAW_SKILL: &str = "GENERATE_RAW_SKILL_PROMPT";
pub const MERGE_SKILL: &str = "MERGE_SKILL_PROMPT";
pub const SKILL_MANAGE: &str = "SKILL_MANAGE_PROMPT";
pub const ADAPT_SKILL: &str = "ADAPT_SKILL_PROMPT";
pub const SKILL_INJECTION_HEADER: &str = "SKILL_INJECTION_HEADER";
pub const ROLLOUT_SUMMARY: &str = "ROLLOUT_SUMMARY";
pub const CROSS_ROLLOUT_CRITIQUE: &str = "CROSS_ROLLOUT_CRITIQUE";
pub const MERGE_EXPERIENCES: &str = "MERGE_PROMPT";
pub const EXPERIENCE_MANAGE: &str = "EXPERIENCE_MANAGE_PROMPT";
pub const INJECTION_HEADER: &str = "INJECTION_HEADER";
pub const TASK_DECOMPOSITION: &str = "TASK_DECOMPOSITION_PROMPT";
pub const EXPERIENCE_REWRITE: &str = "EXPERIENCE_REWRITE_PROMPT";
pub const JUDGE_ANSWER: &str = "JUDGE_ANSWER_PROMPT";

/// (id, asset file name, text) for every shipped template.
const BUILTIN: &[(&str, &str, &str)] = &[
    (DIRECT_COT, "system_direct_cot.txt", include_str!("../../templates/system_direct_cot.txt")),
    (
        MULTI_TOOL_AGENT_SEARCH,
        "system_multi_tool_agent_search.txt",
        include_str!("../../templates/system_multi_tool_agent_search.txt"),
    ),
    (GENERATE_RAW_SKILL, "generate_raw_skill.txt", include_str!("../../templates/generate_raw_skill.txt")),
    (MERGE_SKILL, "merge_skill.txt", include_str!("../../templates/merge_skill.txt")),
    (SKILL_MANAGE, "skill_manage.txt", include_str!("../../templates/skill_manage.txt")),
    (ADAPT_SKILL, "adapt_skill.txt", include_str!("../../templates/adapt_skill.txt")),
    (
        SKILL_INJECTION_HEADER,
        "skill_injection_header.txt",
        include_str!("../../templates/skill_injection_header.txt"),
    ),
    (ROLLOUT_SUMMARY, "rollout_summary.txt", include_str!("../../templates/rollout_summary.txt")),
    (
        CROSS_ROLLOUT_CRITIQUE,
        "cross_rollout_critique.txt",
        include_str!("../../templates/cross_rollout_critique.txt"),
    ),
    (MERGE_EXPERIENCES, "merge_experiences.txt", include_str!("../../templates/merge_experiences.txt")),
    (EXPERIENCE_MANAGE, "experience_manage.txt", include_str!("../../templates/experience_manage.txt")),
    (INJECTION_HEADER, "injection_header.txt", include_str!("../../templates/injection_header.txt")),
    (TASK_DECOMPOSITION, "task_decomposition.txt", include_str!("../../templates/task_decomposition.txt")),
    (EXPERIENCE_REWRITE, "experience_rewrite.txt", include_str!("../../templates/experience_rewrite.txt")),
    (JUDGE_ANSWER, "judge_answer.txt", include_str!("../../templates/judge_answer.txt")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    raw: String,
    pieces: Vec<Piece>,
}

fn is_slot_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, raw: impl Into<String>) -> Self {
        let mut raw: String = raw.into();
        // Asset files end with a newline the prompt itself does not carry.
        if raw.ends_with('\n') {
            raw.pop();
        }
        let mut pieces = Vec::new();
        let mut rest = raw.as_str();
        let mut text = String::new();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_slot_name(&after[..close]) => {
                    text.push_str(&rest[..open]);
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Slot(after[..close].to_string()));
                    rest = &after[close + 1..];
                }
                _ => {
                    text.push_str(&rest[..=open]);
                    rest = after;
                }
            }
        }
        text.push_str(rest);
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Self { id: id.into(), raw, pieces }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// Distinct slot names in first-appearance order.
    pub fn slots(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for p in &self.pieces {
            if let Piece::Slot(name) = p {
                if !seen.contains(&name.as_str()) {
                    seen.push(name.as_str());
                }
            }
        }
        seen
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, GatewayError> {
        let mut out = String::with_capacity(self.raw.len());
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| GatewayError::UnboundSlot {
                            template: self.id.clone(),
                            slot: name.clone(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, _, text)| (id.to_string(), PromptTemplate::new(*id, *text)))
            .collect();
        Self { templates }
    }

    /// Builtin templates, overridden by any same-named asset file found in
    /// `dir`.
    pub fn with_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut registry = Self::builtin();
        for (id, file, _) in BUILTIN {
            let path = dir.join(file);
            if path.exists() {
                let text = fs::read_to_string(&path)?;
                registry.templates.insert(id.to_string(), PromptTemplate::new(*id, text));
            }
        }
        Ok(registry)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn asset_file(id: &str) -> Option<&'static str> {
        BUILTIN.iter().find(|(i, _, _)| *i == id).map(|(_, f, _)| *f)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, GatewayError> {
        self.templates
            .get(id)
            .ok_or_else(|| GatewayError::UnknownTemplate(id.to_string()))
    }

    pub fn render(&self, id: &str, bindings: &[(&str, &str)]) -> Result<String, GatewayError> {
        self.get(id)?.render(bindings)
    }
}
