//! Command implementations behind the `skillbank` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accumulation::{run_accumulation, AccumulationEnv, AccumulationError, KnowledgeState, TaskFailure};
use crate::config::{ChatProvider, ConfigError, EmbeddingProvider, ModelBinding, RunConfig, SearchBackendKind};
use crate::eval::{grade, split_dataset, EvalError, Grade, GraderKind, Judge, MetricsReport, OutcomeMatrix};
use crate::gateway::{ChatBackend, Gateway, GatewayError, ModelRole, OpenAiChatBackend, PromptRegistry, ScriptRule, ScriptedBackend};
use crate::index::{CachedEmbedder, Embedder, EmbeddingBackend, ExperienceIndex, HashingEmbedder, HttpEmbedder};
use crate::inference::{prepare_task, KnowledgeContext, UsageHistory};
use crate::knowledge::{KnowledgeBase, KnowledgeError, EMBEDDINGS_FILE};
use crate::media::ImagePayload;
use crate::runtime::{run_rollouts, transcript_entries, AugmentedPrompt, TaskInstance, TrajectoryRecord};
use crate::tools::{
    toolset_for_dataset, HttpFetcher, KernelLimits, ProcessKernelFactory, SerperClient, StubKernelFactory, ToolName,
    ToolSuite,
};

pub const CONFIG_ECHO: &str = "config.yaml";
pub const REPORT_FILE: &str = "report.json";
pub const TASK_FILE: &str = "task.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Accumulation(#[from] AccumulationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("no knowledge base at {0}; pass --no-knowledge to run without one")]
    MissingKnowledgeBase(PathBuf),
    #[error("{0}")]
    Io(String),
}

impl PipelineError {
    /// Stable identifier for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(ConfigError::UnknownKey(_)) => "unknown_key",
            PipelineError::Config(ConfigError::TypeError { .. }) => "type_error",
            PipelineError::Config(ConfigError::MissingRequired(_)) => "missing_required",
            PipelineError::Config(ConfigError::Io(_)) => "io",
            PipelineError::Gateway(_) => "gateway",
            PipelineError::Knowledge(_) => "knowledge",
            PipelineError::Accumulation(_) => "accumulation",
            PipelineError::Eval(_) => "eval",
            PipelineError::Dataset(_) => "dataset",
            PipelineError::MissingKnowledgeBase(_) => "missing_knowledge_base",
            PipelineError::Io(_) => "io",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({"error": self.kind(), "message": self.to_string()}).to_string()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

// ------------------------------------------------------------------ dataset

/// One line of a task file. The short names (`id`, `question`, `answer`,
/// `images`) are accepted as aliases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    #[serde(alias = "id")]
    pub task_id: String,
    #[serde(alias = "question")]
    pub query: String,
    #[serde(default, alias = "answer", skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    /// Image files, relative to the task file.
    #[serde(default, alias = "images", skip_serializing_if = "Vec::is_empty")]
    pub image_paths: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<Vec<ToolName>>,
}

/// Loads a JSON-lines task file. Tool sets come from the record, then the
/// config override, then the benchmark name.
pub fn load_tasks(config: &RunConfig) -> Result<Vec<TaskInstance>, PipelineError> {
    let ds = config.dataset.as_ref().ok_or_else(|| PipelineError::Dataset("no dataset configured".into()))?;
    let text = fs::read_to_string(&ds.path).map_err(|e| io_err(&ds.path, e))?;
    let base = ds.path.parent().unwrap_or(Path::new("."));
    let default_tools = ds.tools.clone().or_else(|| toolset_for_dataset(&ds.name));
    let mut tasks = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: DatasetRecord = serde_json::from_str(line)
            .map_err(|e| PipelineError::Dataset(format!("{} line {}: {e}", ds.path.display(), n + 1)))?;
        let tools = rec.tools.clone().or_else(|| default_tools.clone()).ok_or_else(|| {
            PipelineError::Dataset(format!("unknown benchmark {:?}; set dataset.tools", ds.name))
        })?;
        let images = rec
            .image_paths
            .iter()
            .map(|p| {
                let path = base.join(p);
                ImagePayload::from_path(&path).map_err(|e| io_err(&path, e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut task = TaskInstance::new(rec.task_id, rec.query).with_tools(tools).with_images(images);
        task.ground_truth = rec.ground_truth;
        task.category = rec.category;
        tasks.push(task);
    }
    Ok(tasks)
}

pub enum Split {
    Train,
    Test,
}

pub fn select_split(config: &RunConfig, tasks: Vec<TaskInstance>, which: Split) -> Result<Vec<TaskInstance>, PipelineError> {
    let ds = config.dataset.as_ref().ok_or_else(|| PipelineError::Dataset("no dataset configured".into()))?;
    match (ds.train_count, ds.test_count) {
        (Some(train), Some(test)) => {
            let split = split_dataset(&tasks, train, test, ds.split_seed)?;
            Ok(match which {
                Split::Train => split.train,
                Split::Test => split.test,
            })
        }
        (None, None) => Ok(tasks),
        _ => Err(PipelineError::Dataset("set both train_count and test_count, or neither".into())),
    }
}

// ------------------------------------------------------------------ wiring

fn load_script(path: &Path) -> Result<Vec<ScriptRule>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_yaml::from_str(&text).map_err(|e| io_err(path, e))
}

fn chat_backend(binding: &ModelBinding) -> Result<Arc<dyn ChatBackend>, PipelineError> {
    Ok(match binding.provider {
        ChatProvider::Scripted => {
            let script = binding.script.as_ref().ok_or_else(|| ConfigError::MissingRequired("script".into()))?;
            let mut backend = ScriptedBackend::from_rules(&load_script(script)?)
                .named(if binding.model.is_empty() { "scripted" } else { &binding.model });
            if !binding.multimodal {
                backend = backend.text_only();
            }
            Arc::new(backend)
        }
        ChatProvider::Openai => {
            let key = std::env::var(&binding.api_key_env).ok();
            Arc::new(OpenAiChatBackend::new(&binding.base_url, &binding.model, key).multimodal(binding.multimodal))
        }
    })
}

/// Runtime objects built from a config.
pub struct Components {
    pub gateway: Gateway,
    pub registry: PromptRegistry,
    pub embedder: Embedder,
    pub suite: ToolSuite,
}

impl Components {
    pub fn build(config: &RunConfig) -> Result<Self, PipelineError> {
        let models = config.models.as_ref().ok_or_else(|| ConfigError::MissingRequired("models".into()))?;
        let gateway = Gateway::new(chat_backend(&models.exec)?, chat_backend(&models.kb)?)
            .with_rate_limit(ModelRole::Exec, models.exec.requests_per_minute)
            .with_rate_limit(ModelRole::Kb, models.kb.requests_per_minute);
        let e = &models.embedding;
        let backend: Arc<dyn EmbeddingBackend> = match e.provider {
            EmbeddingProvider::Hashing => Arc::new(HashingEmbedder::new(e.dim)),
            EmbeddingProvider::Openai => {
                Arc::new(HttpEmbedder::new(&e.base_url, &e.model, std::env::var(&e.api_key_env).ok()))
            }
        };
        let timeout = Duration::from_secs(config.tools.http_timeout_secs);
        let mut suite = ToolSuite::stub();
        if config.tools.search == SearchBackendKind::Serper {
            let client = Arc::new(SerperClient::from_env(timeout).ok_or_else(|| {
                ConfigError::MissingRequired("SERPER_API_KEY environment variable".into())
            })?);
            suite.search = client.clone();
            suite.image_search = client;
            suite.fetcher = Arc::new(HttpFetcher::new(timeout));
        }
        suite.kernels = if config.tools.kernel_command.is_empty() {
            Arc::new(StubKernelFactory::default())
        } else {
            Arc::new(ProcessKernelFactory {
                command: config.tools.kernel_command.clone(),
                limits: KernelLimits {
                    exec_timeout: Duration::from_secs(config.tools.kernel_timeout_secs),
                    ..KernelLimits::default()
                },
            })
        };
        Ok(Self { gateway, registry: PromptRegistry::builtin(), embedder: CachedEmbedder::new(backend), suite })
    }
}

/// `<UTC timestamp>-<first 8 hex digits of the config hash>`.
pub fn run_id(config: &RunConfig) -> String {
    let digest = Sha256::digest(config.to_yaml().as_bytes());
    let hash: String = digest.iter().take(4).map(|b| format!("{b:02x}")).collect();
    format!("{}-{hash}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"))
}

fn prepare_run_dir(config: &RunConfig, run_dir: Option<&Path>) -> Result<PathBuf, PipelineError> {
    let dir = match run_dir {
        Some(d) => d.to_path_buf(),
        None => config.output_dir.join(run_id(config)),
    };
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let echo = dir.join(CONFIG_ECHO);
    fs::write(&echo, config.to_yaml()).map_err(|e| io_err(&echo, e))?;
    Ok(dir)
}

fn load_state(config: &RunConfig, dir: &Path, embedder: &Embedder) -> Result<KnowledgeState, PipelineError> {
    let kb = KnowledgeBase::load(dir, &config.namespace)?;
    let index_path = dir.join(EMBEDDINGS_FILE);
    // Stored vectors are reused when they fit the current embedder;
    // otherwise the index is rebuilt.
    if let Ok(mut index) = ExperienceIndex::load(&index_path) {
        if index.sync(&kb.bank, embedder).is_ok() {
            return Ok(KnowledgeState { kb, index });
        }
    }
    Ok(KnowledgeState::new(kb, embedder)?)
}

// ------------------------------------------------------------------ commands

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccumulateSummary {
    pub run_dir: PathBuf,
    pub completed: Vec<String>,
    pub failed: Vec<TaskFailure>,
    pub experiences: usize,
    pub skill_version: Option<String>,
}

/// Phase I over the train split; writes `kb/` under the run directory.
pub fn cmd_accumulate(config: &RunConfig, run_dir: Option<&Path>) -> Result<AccumulateSummary, PipelineError> {
    let c = Components::build(config)?;
    let tasks = select_split(config, load_tasks(config)?, Split::Train)?;
    let dir = prepare_run_dir(config, run_dir)?;
    let mut state = match &config.kb_dir {
        Some(kb) => load_state(config, kb, &c.embedder)?,
        None => KnowledgeState::new(KnowledgeBase::empty(&config.namespace), &c.embedder)?,
    };
    let (runtime, inference, settings) = (config.runtime(), config.inference(), config.accumulation());
    let env = AccumulationEnv {
        gateway: &c.gateway,
        registry: &c.registry,
        suite: &c.suite,
        embedder: &c.embedder,
        runtime: &runtime,
        inference: &inference,
        settings: &settings,
    };
    let outcome = run_accumulation(&env, &tasks, &mut state, Some(&dir))?;
    let summary = AccumulateSummary {
        run_dir: dir.clone(),
        completed: outcome.completed,
        failed: outcome.failed,
        experiences: state.kb.bank.len(),
        skill_version: state.kb.skill.as_ref().map(|s| s.metadata.version.to_string()),
    };
    write_json(&dir.join("accumulate.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub task_id: String,
    pub question: String,
    pub ground_truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferSummary {
    pub run_dir: PathBuf,
    pub tasks: usize,
    pub correct_rollouts: usize,
    pub total_rollouts: usize,
}

/// Phase II plus the agent loop over the test split. With `no_knowledge`
/// the plain prompt is used and no knowledge-model call is made.
pub fn cmd_infer(config: &RunConfig, run_dir: Option<&Path>, no_knowledge: bool) -> Result<InferSummary, PipelineError> {
    let c = Components::build(config)?;
    let tasks = select_split(config, load_tasks(config)?, Split::Test)?;
    let dir = prepare_run_dir(config, run_dir)?;
    let state = if no_knowledge {
        None
    } else {
        let kb_dir = config.kb_dir.clone().unwrap_or_else(|| dir.join("kb"));
        if !kb_dir.is_dir() {
            return Err(PipelineError::MissingKnowledgeBase(kb_dir));
        }
        Some(load_state(config, &kb_dir, &c.embedder)?)
    };
    let (runtime, inference) = (config.runtime(), config.inference());
    let judge = Judge { gateway: &c.gateway, registry: &c.registry, params: Judge::default_params() };
    let mut summary = InferSummary { run_dir: dir.clone(), tasks: tasks.len(), correct_rollouts: 0, total_rollouts: 0 };

    for task in &tasks {
        let _span = tracing::info_span!("infer", task_id = %task.task_id).entered();
        let tdir = dir.join(format!("task-{}", task.task_id));
        let (prompt, usage) = match &state {
            None => (AugmentedPrompt::plain(&c.registry, task)?, UsageHistory::empty(&task.task_id)),
            Some(s) => {
                let ctx = KnowledgeContext {
                    gateway: &c.gateway,
                    registry: &c.registry,
                    kb: &s.kb,
                    index: &s.index,
                    embedder: &c.embedder,
                    settings: &inference,
                };
                let p = prepare_task(&ctx, task)?;
                (p.prompt, p.usage)
            }
        };
        write_json(
            &tdir.join(TASK_FILE),
            &TaskFile { task_id: task.task_id.clone(), question: task.query.clone(), ground_truth: task.ground_truth.clone() },
        )?;
        usage.save(&tdir).map_err(|e| io_err(&tdir, e))?;
        let set = run_rollouts(&c.gateway, &c.suite, task, &prompt, &runtime, config.rollouts);
        for t in &set.trajectories {
            let rdir = tdir.join(format!("rollout-{}", t.rollout));
            let g = grade(
                t.final_answer.as_deref(),
                task.ground_truth.as_deref().unwrap_or(""),
                &task.query,
                config.grader,
                Some(&judge),
            );
            summary.total_rollouts += 1;
            summary.correct_rollouts += usize::from(g.correct);
            write_json(&rdir.join("trajectory.json"), &t.record())?;
            write_json(&rdir.join("transcript.json"), &transcript_entries(&t.transcript))?;
            write_json(&rdir.join("grade.json"), &g)?;
        }
    }
    Ok(summary)
}

fn sorted_subdirs(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix)))
        .collect();
    out.sort();
    Ok(out)
}

fn rollout_number(path: &Path) -> usize {
    path.file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_prefix("rollout-"))
        .and_then(|n| n.parse().ok())
        .unwrap_or(usize::MAX)
}

/// Computes the metrics report of an infer run. Stored grades are used
/// unless `regrade` names a grader; `model_judge` needs the run's models.
pub fn cmd_eval(run_dir: &Path, regrade: Option<GraderKind>) -> Result<MetricsReport, PipelineError> {
    let judge_components = match regrade {
        Some(GraderKind::ModelJudge) => {
            let config = RunConfig::load(&run_dir.join(CONFIG_ECHO))?;
            Some(Components::build(&config)?)
        }
        _ => None,
    };
    let judge = judge_components
        .as_ref()
        .map(|c| Judge { gateway: &c.gateway, registry: &c.registry, params: Judge::default_params() });

    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut flagged = 0;
    for tdir in sorted_subdirs(run_dir, "task-")? {
        let task_path = tdir.join(TASK_FILE);
        if !task_path.exists() {
            continue;
        }
        let task: TaskFile = read_json(&task_path)?;
        let mut rollouts = sorted_subdirs(&tdir, "rollout-")?;
        rollouts.sort_by_key(|p| rollout_number(p));
        let mut row = Vec::new();
        for rdir in rollouts {
            let record: TrajectoryRecord = read_json(&rdir.join("trajectory.json"))?;
            let g: Grade = match regrade {
                Some(kind) => grade(
                    record.final_answer.as_deref(),
                    task.ground_truth.as_deref().unwrap_or(""),
                    &task.question,
                    kind,
                    judge.as_ref(),
                ),
                None => read_json(&rdir.join("grade.json"))?,
            };
            flagged += usize::from(g.flagged);
            row.push(g.correct);
            records.push(record);
        }
        rows.push(row);
    }
    let matrix = OutcomeMatrix::new(rows)?;
    let report = MetricsReport::compute(&matrix, &records, flagged);
    report.save(&run_dir.join(REPORT_FILE))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KbInspection {
    pub namespace: String,
    pub experiences: usize,
    pub next_id: u64,
    pub skill: Option<SkillInfo>,
    pub entries: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillInfo {
    pub name: String,
    pub version: String,
    pub words: usize,
}

pub fn cmd_kb_inspect(kb_dir: &Path, namespace: &str) -> Result<KbInspection, PipelineError> {
    let kb = KnowledgeBase::load(kb_dir, namespace)?;
    Ok(KbInspection {
        namespace: kb.namespace.clone(),
        experiences: kb.bank.len(),
        next_id: kb.bank.next_id(),
        skill: kb.skill.as_ref().map(|s| SkillInfo {
            name: s.metadata.name.clone(),
            version: s.metadata.version.to_string(),
            words: s.word_count(),
        }),
        entries: kb.bank.entries().map(|e| (e.id.to_string(), e.text.clone())).collect(),
    })
}

/// Every store invariant breach in a knowledge base directory. Empty means
/// valid.
pub fn cmd_kb_validate(kb_dir: &Path, namespace: &str, max_experiences: usize) -> Vec<String> {
    let kb = match KnowledgeBase::load(kb_dir, namespace) {
        Ok(kb) => kb,
        Err(e) => return vec![e.to_string()],
    };
    let mut out = kb.bank.violations(max_experiences);
    if let Some(skill) = &kb.skill {
        if let Err(e) = crate::knowledge::SkillDocument::parse(&skill.render()) {
            out.push(format!("SKILL.md does not round-trip: {e}"));
        }
    }
    let index_path = kb_dir.join(EMBEDDINGS_FILE);
    if index_path.exists() {
        match ExperienceIndex::load(&index_path) {
            Ok(index) => {
                for (id, _) in index.iter() {
                    if !kb.bank.contains(id) {
                        out.push(format!("embeddings.json has a vector for missing entry {id}"));
                    }
                }
                for id in kb.bank.ids() {
                    if index.get(id).is_none() {
                        out.push(format!("embeddings.json lacks a vector for {id}"));
                    }
                }
            }
            Err(e) => out.push(format!("embeddings.json: {e}")),
        }
    }
    out
}
