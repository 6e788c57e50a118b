//! Test-time use of the knowledge base: decompose the task, retrieve and
//! rewrite experiences, adapt the skill, and inject both into the prompt.
//!
//! Every model step here fails open: a bad or missing completion degrades to
//! the raw query, the original experiences, or the unadapted skill body.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::gateway::{templates, Gateway, GatewayError, GenerationParams, ModelRole, PromptRegistry};
use crate::index::{union_retrieve, Embedder, ExperienceIndex};
use crate::knowledge::{ExperienceEntry, ExperienceId, KnowledgeBase, SkillDocument};
use crate::media::NamedImage;
use crate::runtime::{system_prompt, AugmentedPrompt, TaskInstance};
use crate::textutil::{extract_last_json, JsonShape};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    #[serde(rename = "type")]
    pub kind: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedExperience {
    pub entry: ExperienceEntry,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewrittenExperience {
    pub source_id: ExperienceId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageHistory {
    pub task_id: String,
    pub adapted_skill_text: String,
    pub retrieved_ids: Vec<ExperienceId>,
}

/// `usage.json` contents; the adapted skill itself sits next to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageFile {
    pub task_id: String,
    pub retrieved_ids: Vec<ExperienceId>,
    pub adapted_skill_sha256: String,
    pub adapted_skill_path: String,
}

pub const ADAPTED_SKILL_FILE: &str = "adapted_skill.md";
pub const USAGE_FILE: &str = "usage.json";

impl UsageHistory {
    pub fn empty(task_id: &str) -> Self {
        Self { task_id: task_id.to_string(), adapted_skill_text: String::new(), retrieved_ids: Vec::new() }
    }

    /// Writes `usage.json` and the adapted skill into `dir`.
    pub fn save(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(ADAPTED_SKILL_FILE), &self.adapted_skill_text)?;
        let file = UsageFile {
            task_id: self.task_id.clone(),
            retrieved_ids: self.retrieved_ids.clone(),
            adapted_skill_sha256: format!("{:x}", Sha256::digest(self.adapted_skill_text.as_bytes())),
            adapted_skill_path: ADAPTED_SKILL_FILE.to_string(),
        };
        let path = dir.join(USAGE_FILE);
        let mut text = serde_json::to_string_pretty(&file).expect("usage serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(USAGE_FILE))?;
        let file: UsageFile =
            serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let adapted = std::fs::read_to_string(dir.join(&file.adapted_skill_path))?;
        Ok(Self { task_id: file.task_id, adapted_skill_text: adapted, retrieved_ids: file.retrieved_ids })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceSettings {
    pub top_k: usize,
    pub tau_min: f64,
    pub max_subtasks: usize,
    pub max_images: usize,
    pub decomposition: GenerationParams,
    pub rewrite: GenerationParams,
    pub adapt: GenerationParams,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        Self {
            top_k: 3,
            tau_min: 0.0,
            max_subtasks: 3,
            max_images: 100,
            decomposition: GenerationParams::new(0.3, 1.0, 2048),
            rewrite: GenerationParams::new(0.3, 1.0, 8192),
            adapt: GenerationParams::new(0.3, 1.0, 8192),
        }
    }
}

/// Immutable view of everything Phase II reads.
pub struct KnowledgeContext<'a> {
    pub gateway: &'a Gateway,
    pub registry: &'a PromptRegistry,
    pub kb: &'a KnowledgeBase,
    pub index: &'a ExperienceIndex,
    pub embedder: &'a Embedder,
    pub settings: &'a InferenceSettings,
}

/// `[E<id>] <text>` lines.
pub fn render_bullets<'a>(items: impl IntoIterator<Item = (ExperienceId, &'a str)>) -> String {
    items
        .into_iter()
        .map(|(id, text)| format!("[{id}] {text}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn fallback_subtask(query: &str) -> Vec<Subtask> {
    vec![Subtask { kind: "task".into(), query: query.to_string() }]
}

/// Parses a decomposition completion; `None` if no usable subtask is found.
pub fn parse_subtasks(text: &str, max: usize) -> Option<Vec<Subtask>> {
    let array = extract_last_json(text, JsonShape::Array)?;
    let field = |item: &Value, key: &str| -> Option<String> {
        let obj = item.as_object()?;
        obj.iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .and_then(|(_, v)| v.as_str())
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
    };
    let subtasks: Vec<Subtask> = array
        .as_array()?
        .iter()
        .filter_map(|item| Some(Subtask { kind: field(item, "type")?, query: field(item, "query")? }))
        .take(max.max(1))
        .collect();
    (!subtasks.is_empty()).then_some(subtasks)
}

pub fn decompose_task(
    gateway: &Gateway,
    registry: &PromptRegistry,
    query: &str,
    images: Vec<NamedImage>,
    settings: &InferenceSettings,
) -> Vec<Subtask> {
    let prompt = match registry.render(templates::TASK_DECOMPOSITION, &[("task_description", query)]) {
        Ok(p) => p,
        Err(e) => {
            tracing::warn!(error = %e, "decomposition template failed; using raw query");
            return fallback_subtask(query);
        }
    };
    match gateway.complete_prompt(ModelRole::Kb, templates::TASK_DECOMPOSITION, prompt, images, settings.decomposition) {
        Ok(c) => parse_subtasks(&c.text, settings.max_subtasks).unwrap_or_else(|| {
            tracing::warn!("decomposition output unparseable; using raw query");
            fallback_subtask(query)
        }),
        Err(e) => {
            tracing::warn!(error = %e, "decomposition call failed; using raw query");
            fallback_subtask(query)
        }
    }
}

/// Union of per-subtask top-k over the index, best score first.
pub fn retrieve_for_task(
    subtasks: &[Subtask],
    kb: &KnowledgeBase,
    index: &ExperienceIndex,
    embedder: &Embedder,
    k: usize,
    tau_min: f64,
) -> Vec<RetrievedExperience> {
    if index.is_empty() || subtasks.is_empty() {
        return Vec::new();
    }
    let queries = match subtasks.iter().map(|s| embedder.embed(&s.query)).collect::<Result<Vec<_>, _>>() {
        Ok(q) => q,
        Err(e) => {
            tracing::warn!(error = %e, "subtask embedding failed; retrieving nothing");
            return Vec::new();
        }
    };
    match union_retrieve(&queries, index, k, tau_min) {
        Ok(matches) => matches
            .into_iter()
            .filter_map(|m| kb.bank.get(m.entry_id).map(|e| RetrievedExperience { entry: e.clone(), score: m.score }))
            .collect(),
        Err(e) => {
            tracing::warn!(error = %e, "retrieval failed; retrieving nothing");
            Vec::new()
        }
    }
}

fn pass_through(retrieved: &[RetrievedExperience]) -> Vec<RewrittenExperience> {
    retrieved
        .iter()
        .map(|r| RewrittenExperience { source_id: r.entry.id, text: r.entry.text.clone() })
        .collect()
}

/// Maps a rewrite completion onto the retrieved ids. Ids absent from the
/// output are dropped; ids that were not retrieved are ignored.
pub fn parse_rewrite(text: &str, retrieved: &[RetrievedExperience]) -> Option<Vec<RewrittenExperience>> {
    let object = extract_last_json(text, JsonShape::Object)?;
    let map = object.as_object()?;
    let mut by_id = std::collections::BTreeMap::new();
    for (key, value) in map {
        let (Ok(id), Some(text)) = (key.parse::<ExperienceId>(), value.as_str()) else {
            continue;
        };
        if !text.trim().is_empty() {
            by_id.insert(id, text.trim().to_string());
        }
    }
    Some(
        retrieved
            .iter()
            .filter_map(|r| by_id.remove(&r.entry.id).map(|text| RewrittenExperience { source_id: r.entry.id, text }))
            .collect(),
    )
}

pub fn rewrite_experiences(
    gateway: &Gateway,
    registry: &PromptRegistry,
    retrieved: &[RetrievedExperience],
    query: &str,
    images: Vec<NamedImage>,
    settings: &InferenceSettings,
) -> Vec<RewrittenExperience> {
    if retrieved.is_empty() {
        return Vec::new();
    }
    let listing = render_bullets(retrieved.iter().map(|r| (r.entry.id, r.entry.text.as_str())));
    let prompt = match registry.render(
        templates::EXPERIENCE_REWRITE,
        &[("task_description", query), ("experiences_text", &listing)],
    ) {
        Ok(p) => p,
        Err(e) => {
            tracing::warn!(error = %e, "rewrite template failed; passing originals through");
            return pass_through(retrieved);
        }
    };
    match gateway.complete_prompt(ModelRole::Kb, templates::EXPERIENCE_REWRITE, prompt, images, settings.rewrite) {
        Ok(c) => parse_rewrite(&c.text, retrieved).unwrap_or_else(|| {
            tracing::warn!("rewrite output has no JSON object; passing originals through");
            pass_through(retrieved)
        }),
        Err(e) => {
            tracing::warn!(error = %e, "rewrite call failed; passing originals through");
            pass_through(retrieved)
        }
    }
}

/// Task-specific version of the skill, or "" when there is no skill.
pub fn adapt_skill(
    gateway: &Gateway,
    registry: &PromptRegistry,
    skill: Option<&SkillDocument>,
    rewritten: &[RewrittenExperience],
    query: &str,
    images: Vec<NamedImage>,
    settings: &InferenceSettings,
) -> String {
    let Some(skill) = skill else {
        return String::new();
    };
    let fallback = skill.render_body();
    let experiences = render_bullets(rewritten.iter().map(|r| (r.source_id, r.text.as_str())));
    let base = skill.render();
    let prompt = match registry.render(
        templates::ADAPT_SKILL,
        &[("base_skill", &base), ("experiences", &experiences), ("task", query)],
    ) {
        Ok(p) => p,
        Err(e) => {
            tracing::warn!(error = %e, "adapt template failed; using skill body");
            return fallback;
        }
    };
    match gateway.complete_prompt(ModelRole::Kb, templates::ADAPT_SKILL, prompt, images, settings.adapt) {
        Ok(c) if c.text.trim_start().starts_with("---") => {
            tracing::warn!("adapted skill carries frontmatter; using skill body");
            fallback
        }
        Ok(c) if c.text.trim().is_empty() => fallback,
        Ok(c) => c.text,
        Err(e) => {
            tracing::warn!(error = %e, "adapt call failed; using skill body");
            fallback
        }
    }
}

const EPILOGUE: &str = "Your instruction is following:";

/// Prepends the injected knowledge to `instruction`. With no knowledge the
/// instruction is returned unchanged.
pub fn build_augmented_prompt(
    registry: &PromptRegistry,
    system_text: String,
    adapted_skill: &str,
    rewritten: &[RewrittenExperience],
    instruction: &str,
) -> Result<AugmentedPrompt, GatewayError> {
    let skill_block = if adapted_skill.trim().is_empty() {
        None
    } else {
        Some(registry.render(templates::SKILL_INJECTION_HEADER, &[("skill_content", adapted_skill.trim())])?)
    };
    let tips_block = if rewritten.is_empty() {
        None
    } else {
        let bullets = render_bullets(rewritten.iter().map(|r| (r.source_id, r.text.as_str())));
        Some(registry.render(templates::INJECTION_HEADER, &[("bullets", &bullets)])?)
    };
    let header = match (skill_block, tips_block) {
        (None, None) => None,
        (Some(one), None) | (None, Some(one)) => Some(one),
        (Some(skill), Some(tips)) => {
            let skill = skill.strip_suffix(EPILOGUE).unwrap_or(&skill).trim_end();
            Some(format!("{skill}\n\n{tips}"))
        }
    };
    let user_text = match header {
        None => instruction.to_string(),
        Some(h) => format!("{h}\n{instruction}"),
    };
    Ok(AugmentedPrompt { system_text, user_text })
}

/// Phase II output for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTask {
    pub prompt: AugmentedPrompt,
    pub usage: UsageHistory,
    pub subtasks: Vec<Subtask>,
    pub retrieved: Vec<RetrievedExperience>,
    pub rewritten: Vec<RewrittenExperience>,
}

/// Runs decomposition, retrieval, rewrite and adaptation against the
/// current knowledge and assembles the prompt. Steps whose input is empty
/// are skipped without a model call, so an empty knowledge base yields the
/// plain prompt.
pub fn prepare_task(ctx: &KnowledgeContext<'_>, task: &TaskInstance) -> Result<PreparedTask, GatewayError> {
    let system_text = system_prompt(ctx.registry, &task.active_tools)?;
    let images = || task.named_images(ctx.settings.max_images);

    let subtasks = if ctx.kb.bank.is_empty() {
        Vec::new()
    } else {
        decompose_task(ctx.gateway, ctx.registry, &task.query, images(), ctx.settings)
    };
    let retrieved = retrieve_for_task(&subtasks, ctx.kb, ctx.index, ctx.embedder, ctx.settings.top_k, ctx.settings.tau_min);
    let rewritten = rewrite_experiences(ctx.gateway, ctx.registry, &retrieved, &task.query, images(), ctx.settings);
    let adapted = adapt_skill(
        ctx.gateway,
        ctx.registry,
        ctx.kb.skill.as_ref(),
        &rewritten,
        &task.query,
        images(),
        ctx.settings,
    );
    let prompt = build_augmented_prompt(ctx.registry, system_text, &adapted, &rewritten, &task.query)?;
    Ok(PreparedTask {
        prompt,
        usage: UsageHistory {
            task_id: task.task_id.clone(),
            adapted_skill_text: adapted,
            retrieved_ids: retrieved.iter().map(|r| r.entry.id).collect(),
        },
        subtasks,
        retrieved,
        rewritten,
    })
}
