//! Run configuration: one YAML file, every hyperparameter defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accumulation::AccumulationSettings;
use crate::eval::GraderKind;
use crate::gateway::GenerationParams;
use crate::inference::InferenceSettings;
use crate::runtime::RuntimeConfig;
use crate::tools::ToolName;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {field}: {reason}")]
    TypeError { field: String, reason: String },
    #[error("missing required key {0:?}")]
    MissingRequired(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatProvider {
    /// OpenAI-compatible `/chat/completions` endpoint.
    Openai,
    /// Replays a script file of [`ScriptRule`](crate::gateway::ScriptRule)s.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBinding {
    pub provider: ChatProvider,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "yes")]
    pub multimodal: bool,
    /// Script file for the scripted provider, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProvider {
    Openai,
    /// Offline feature-hashing embedder.
    Hashing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingBinding {
    #[serde(default = "default_embedding_provider")]
    pub provider: EmbeddingProvider,
    #[serde(default = "default_embedding_model")]
    pub model: String,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Vector size for the hashing provider.
    #[serde(default = "default_hash_dim")]
    pub dim: usize,
}

impl Default for EmbeddingBinding {
    fn default() -> Self {
        Self {
            provider: default_embedding_provider(),
            model: default_embedding_model(),
            base_url: default_base_url(),
            api_key_env: default_api_key_env(),
            dim: default_hash_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    pub exec: ModelBinding,
    pub kb: ModelBinding,
    #[serde(default)]
    pub embedding: EmbeddingBinding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Benchmark name; selects the active tool set.
    #[serde(default)]
    pub name: String,
    /// JSON-lines task file, relative to the config file.
    pub path: PathBuf,
    /// With both counts set, tasks are split with `split_seed`; otherwise
    /// the whole file serves as both splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_count: Option<usize>,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    /// Overrides the tool set derived from `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<Vec<ToolName>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchBackendKind {
    Serper,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolsConfig {
    #[serde(default = "default_search_backend")]
    pub search: SearchBackendKind,
    /// Command line of the code kernel worker. Empty selects the built-in
    /// stub kernel.
    #[serde(default)]
    pub kernel_command: Vec<String>,
    #[serde(default = "default_kernel_timeout")]
    pub kernel_timeout_secs: u64,
    #[serde(default = "default_http_timeout")]
    pub http_timeout_secs: u64,
}

impl Default for ToolsConfig {
    fn default() -> Self {
        Self {
            search: default_search_backend(),
            kernel_command: Vec::new(),
            kernel_timeout_secs: default_kernel_timeout(),
            http_timeout_secs: default_http_timeout(),
        }
    }
}

/// Effective configuration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<ModelsConfig>,
    #[serde(default)]
    pub tools: ToolsConfig,
    #[serde(default = "default_namespace")]
    pub namespace: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Knowledge base read by `infer`; defaults to the latest accumulate run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_dir: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_grader")]
    pub grader: GraderKind,

    // Execution model.
    #[serde(default = "d_0_6")]
    pub temperature: f64,
    #[serde(default = "d_1_0")]
    pub top_p: f64,
    #[serde(default = "d_8192")]
    pub max_tokens: u32,
    #[serde(default = "d_20")]
    pub max_turns: usize,
    #[serde(default = "d_100")]
    pub max_images: usize,
    #[serde(default = "d_4")]
    pub rollouts: usize,

    // Rollout summary.
    #[serde(default = "d_0_6")]
    pub summary_temperature: f64,
    #[serde(default = "d_12288")]
    pub summary_max_tokens: u32,
    #[serde(default = "d_2048")]
    pub image_summary_max_tokens: u32,

    // Cross-rollout critique.
    #[serde(default = "d_0_6")]
    pub critique_temperature: f64,
    #[serde(default = "d_12288")]
    pub critique_max_tokens: u32,
    #[serde(default = "d_64")]
    pub max_experience_words: usize,
    #[serde(default = "d_4")]
    pub max_ops: usize,

    // Consolidation.
    #[serde(default = "d_0_70")]
    pub theta_sim: f64,
    #[serde(default = "d_120")]
    pub max_experiences: usize,
    #[serde(default = "d_1000")]
    pub max_skill_words: usize,

    // Decomposition retrieval.
    #[serde(default = "d_0_3")]
    pub decomposition_temperature: f64,
    #[serde(default = "d_2048")]
    pub decomposition_max_tokens: u32,
    #[serde(default = "d_3")]
    pub top_k: usize,
    #[serde(default)]
    pub tau_min: f64,

    // Adaptation.
    #[serde(default = "d_0_3")]
    pub rewrite_temperature: f64,
    #[serde(default = "d_8192")]
    pub rewrite_max_tokens: u32,
    #[serde(default = "d_0_3")]
    pub adapt_temperature: f64,
    #[serde(default = "d_8192")]
    pub adapt_max_tokens: u32,
}

fn yes() -> bool {
    true
}
fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_embedding_provider() -> EmbeddingProvider {
    EmbeddingProvider::Openai
}
fn default_embedding_model() -> String {
    "text-embedding-3-small".into()
}
fn default_hash_dim() -> usize {
    256
}
fn default_split_seed() -> u64 {
    42
}
fn default_search_backend() -> SearchBackendKind {
    SearchBackendKind::Serper
}
fn default_kernel_timeout() -> u64 {
    60
}
fn default_http_timeout() -> u64 {
    30
}
fn default_namespace() -> String {
    "default".into()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_concurrency() -> usize {
    4
}
fn default_grader() -> GraderKind {
    GraderKind::ExactNormalized
}
fn d_0_3() -> f64 {
    0.3
}
fn d_0_6() -> f64 {
    0.6
}
fn d_0_70() -> f64 {
    0.70
}
fn d_1_0() -> f64 {
    1.0
}
fn d_3() -> usize {
    3
}
fn d_4() -> usize {
    4
}
fn d_20() -> usize {
    20
}
fn d_64() -> usize {
    64
}
fn d_100() -> usize {
    100
}
fn d_120() -> usize {
    120
}
fn d_1000() -> usize {
    1000
}
fn d_2048() -> u32 {
    2048
}
fn d_8192() -> u32 {
    8192
}
fn d_12288() -> u32 {
    12_288
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse("").expect("defaults are valid")
    }
}

fn classify(path: String, message: String) -> ConfigError {
    if let Some(rest) = message.strip_prefix("unknown field `") {
        let key = rest.split('`').next().unwrap_or_default();
        let full = match path.rsplit_once('.') {
            Some((parent, _)) if path != "." => format!("{parent}.{key}"),
            _ => key.to_string(),
        };
        return ConfigError::UnknownKey(full);
    }
    if let Some(rest) = message.strip_prefix("missing field `") {
        let key = rest.split('`').next().unwrap_or_default();
        let full = if path == "." { key.to_string() } else { format!("{path}.{key}") };
        return ConfigError::MissingRequired(full);
    }
    ConfigError::TypeError { field: path, reason: message }
}

impl RunConfig {
    /// Parses YAML text; an empty document yields all defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: serde_yaml::Value = serde_yaml::from_str(text)
            .map_err(|e| ConfigError::TypeError { field: ".".into(), reason: e.to_string() })?;
        let value = match value {
            serde_yaml::Value::Null => serde_yaml::Value::Mapping(Default::default()),
            v => v,
        };
        let config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            classify(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = &mut self.dataset {
            fix(&mut d.path);
        }
        if let Some(m) = &mut self.models {
            for b in [&mut m.exec, &mut m.kb] {
                if let Some(s) = &mut b.script {
                    fix(s);
                }
            }
        }
        fix(&mut self.output_dir);
        if let Some(k) = &mut self.kb_dir {
            fix(k);
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, reason: &str| Err(ConfigError::TypeError { field: field.into(), reason: reason.into() });
        if !(-1.0..=1.0).contains(&self.theta_sim) {
            return bad("theta_sim", "must be in [-1, 1]");
        }
        if !(-1.0..=1.0).contains(&self.tau_min) {
            return bad("tau_min", "must be in [-1, 1]");
        }
        for (name, t) in [
            ("temperature", self.temperature),
            ("summary_temperature", self.summary_temperature),
            ("critique_temperature", self.critique_temperature),
            ("decomposition_temperature", self.decomposition_temperature),
            ("rewrite_temperature", self.rewrite_temperature),
            ("adapt_temperature", self.adapt_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return bad(name, "must be in [0, 2]");
            }
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p", "must be in (0, 1]");
        }
        for (name, v) in [
            ("max_turns", self.max_turns),
            ("rollouts", self.rollouts),
            ("concurrency", self.concurrency),
            ("max_experience_words", self.max_experience_words),
            ("max_experiences", self.max_experiences),
            ("top_k", self.top_k),
        ] {
            if v == 0 {
                return bad(name, "must be positive");
            }
        }
        if let Some(m) = &self.models {
            for (role, b) in [("models.exec", &m.exec), ("models.kb", &m.kb)] {
                if b.provider == ChatProvider::Scripted && b.script.is_none() {
                    return Err(ConfigError::MissingRequired(format!("{role}.script")));
                }
                if b.provider == ChatProvider::Openai && b.model.is_empty() {
                    return Err(ConfigError::MissingRequired(format!("{role}.model")));
                }
            }
        }
        Ok(())
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    pub fn runtime(&self) -> RuntimeConfig {
        RuntimeConfig {
            max_turns: self.max_turns,
            max_images: self.max_images,
            params: GenerationParams::new(self.temperature, self.top_p, self.max_tokens),
            seed: self.seed,
            concurrency: self.concurrency,
            ..RuntimeConfig::default()
        }
    }

    pub fn inference(&self) -> InferenceSettings {
        InferenceSettings {
            top_k: self.top_k,
            tau_min: self.tau_min,
            max_images: self.max_images,
            decomposition: GenerationParams::new(self.decomposition_temperature, 1.0, self.decomposition_max_tokens),
            rewrite: GenerationParams::new(self.rewrite_temperature, 1.0, self.rewrite_max_tokens),
            adapt: GenerationParams::new(self.adapt_temperature, 1.0, self.adapt_max_tokens),
            ..InferenceSettings::default()
        }
    }

    pub fn accumulation(&self) -> AccumulationSettings {
        AccumulationSettings {
            rollouts: self.rollouts,
            max_ops: self.max_ops,
            theta_sim: self.theta_sim,
            max_experiences: self.max_experiences,
            max_experience_words: self.max_experience_words,
            max_skill_words: self.max_skill_words,
            max_images: self.max_images,
            summary: GenerationParams::new(self.summary_temperature, 1.0, self.summary_max_tokens),
            image_summary_max_tokens: self.image_summary_max_tokens,
            critique: GenerationParams::new(self.critique_temperature, 1.0, self.critique_max_tokens),
            consolidation: GenerationParams::new(self.summary_temperature, 1.0, self.critique_max_tokens),
            grader: self.grader,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.top_k, 3);
        assert_eq!(c.theta_sim, 0.70);
        assert_eq!((c.rollouts, c.max_turns, c.max_images), (4, 20, 100));
        assert_eq!((c.max_experiences, c.max_experience_words, c.max_skill_words, c.max_ops), (120, 64, 1000, 4));
        assert_eq!((c.summary_max_tokens, c.image_summary_max_tokens, c.critique_max_tokens), (12_288, 2048, 12_288));
        assert_eq!((c.decomposition_temperature, c.decomposition_max_tokens), (0.3, 2048));
        assert_eq!((c.rewrite_max_tokens, c.adapt_max_tokens), (8192, 8192));
        assert_eq!(c.tau_min, 0.0);
        assert_eq!(RunConfig::parse("# only a comment\n").unwrap(), c);
        assert_eq!(c.accumulation(), AccumulationSettings::default());
        assert_eq!(c.inference(), InferenceSettings::default());
        assert_eq!(c.runtime(), RuntimeConfig::default());
    }

    #[test]
    fn errors_are_classified() {
        assert!(matches!(RunConfig::parse("theta_sim: 1.5"), Err(ConfigError::TypeError { field, .. }) if field == "theta_sim"));
        assert_eq!(RunConfig::parse("foo: 1"), Err(ConfigError::UnknownKey("foo".into())));
        assert_eq!(
            RunConfig::parse("tools:\n  searh: stub\n"),
            Err(ConfigError::UnknownKey("tools.searh".into()))
        );
        assert!(matches!(RunConfig::parse("top_k: many"), Err(ConfigError::TypeError { field, .. }) if field == "top_k"));
        assert_eq!(
            RunConfig::parse("dataset:\n  name: x\n"),
            Err(ConfigError::MissingRequired("dataset.path".into()))
        );
        assert_eq!(
            RunConfig::parse("models:\n  exec: {provider: scripted}\n  kb: {provider: scripted, script: k.json}\n"),
            Err(ConfigError::MissingRequired("models.exec.script".into()))
        );
    }

    #[test]
    fn round_trips_through_yaml() {
        let c = RunConfig::parse("rollouts: 2\nseed: 7\ntools: {search: stub}\n").unwrap();
        assert_eq!(RunConfig::parse(&c.to_yaml()).unwrap(), c);
    }
}
