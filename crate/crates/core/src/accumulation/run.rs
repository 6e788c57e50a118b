use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::consolidate::{ConsolidationReport, Consolidator};
use super::extract::{critique_rollouts, extract_skill_fragment, summarize_rollout, Critique};
use super::serialize::RolloutContext;
use super::{AccumulationError, AccumulationSettings};
use crate::eval::{grade, Grade, Judge};
use crate::gateway::{Gateway, PromptRegistry};
use crate::index::{Embedder, ExperienceIndex};
use crate::inference::{prepare_task, InferenceSettings, KnowledgeContext};
use crate::knowledge::{ChangeRecord, ExperienceEntry, KnowledgeBase};
use crate::runtime::{run_rollouts, RuntimeConfig, TaskInstance};
use crate::tools::ToolSuite;

pub const CONSOLIDATION_LOG: &str = "consolidation.log";

/// Everything a Phase I run reads but never mutates.
pub struct AccumulationEnv<'a> {
    pub gateway: &'a Gateway,
    pub registry: &'a PromptRegistry,
    pub suite: &'a ToolSuite,
    pub embedder: &'a Embedder,
    pub runtime: &'a RuntimeConfig,
    pub inference: &'a InferenceSettings,
    pub settings: &'a AccumulationSettings,
}

/// The knowledge base together with the vectors of its entries.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeState {
    pub kb: KnowledgeBase,
    pub index: ExperienceIndex,
}

impl KnowledgeState {
    pub fn new(kb: KnowledgeBase, embedder: &Embedder) -> Result<Self, AccumulationError> {
        let mut index = ExperienceIndex::new();
        index.sync(&kb.bank, embedder)?;
        Ok(Self { kb, index })
    }

    /// Writes the knowledge base files plus `embeddings.json`.
    pub fn save(&self, dir: &Path, embedding_model: &str) -> Result<(), AccumulationError> {
        self.kb.save(dir)?;
        self.index.save(&dir.join(crate::knowledge::EMBEDDINGS_FILE), Some(embedding_model))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccumulationOutcome {
    pub completed: Vec<String>,
    pub failed: Vec<TaskFailure>,
    pub report: ConsolidationReport,
}

#[derive(Serialize)]
struct LogLine<'a> {
    task_id: &'a str,
    #[serde(flatten)]
    record: &'a ChangeRecord,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> AccumulationError {
    AccumulationError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), AccumulationError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), AccumulationError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_file(path, &text)
}

pub(crate) fn task_dir(run_dir: &Path, task_id: &str) -> PathBuf {
    run_dir.join(format!("task-{task_id}"))
}

pub(crate) fn rollout_dir(run_dir: &Path, task_id: &str, rollout: usize) -> PathBuf {
    task_dir(run_dir, task_id).join(format!("rollout-{rollout}"))
}

/// Runs Phase I over `tasks` in order. Each task works on a copy of the
/// knowledge state that is committed only if the task completes, so a
/// failing task leaves the state as it was.
pub fn run_accumulation(
    env: &AccumulationEnv<'_>,
    tasks: &[TaskInstance],
    state: &mut KnowledgeState,
    run_dir: Option<&Path>,
) -> Result<AccumulationOutcome, AccumulationError> {
    let mut outcome = AccumulationOutcome::default();
    for task in tasks {
        let _span = tracing::info_span!("accumulate", task_id = %task.task_id).entered();
        let mut working = state.clone();
        match process_task(env, task, &mut working, run_dir) {
            Ok(report) => {
                if let Some(dir) = run_dir {
                    append_log(&dir.join(CONSOLIDATION_LOG), &task.task_id, &report.changes)?;
                }
                *state = working;
                outcome.completed.push(task.task_id.clone());
                outcome.report.ops_applied.extend(report.ops_applied);
                outcome.report.merges_triggered += report.merges_triggered;
                outcome.report.prunes_triggered += report.prunes_triggered;
                outcome.report.skill_refined |= report.skill_refined;
                outcome.report.changes.extend(report.changes);
            }
            Err(e) => {
                tracing::error!(error = %e, "task failed; knowledge left unchanged");
                outcome.failed.push(TaskFailure { task_id: task.task_id.clone(), error: e.to_string() });
            }
        }
    }
    if let Some(dir) = run_dir {
        state.save(&dir.join("kb"), env.embedder.backend().model_id())?;
    }
    Ok(outcome)
}

fn append_log(path: &Path, task_id: &str, records: &[ChangeRecord]) -> Result<(), AccumulationError> {
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_err(path, e))?;
    for record in records {
        let line = serde_json::to_string(&LogLine { task_id, record }).map_err(|e| io_err(path, e))?;
        writeln!(file, "{line}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn process_task(
    env: &AccumulationEnv<'_>,
    task: &TaskInstance,
    state: &mut KnowledgeState,
    run_dir: Option<&Path>,
) -> Result<ConsolidationReport, AccumulationError> {
    let ground_truth = task
        .ground_truth
        .clone()
        .ok_or_else(|| AccumulationError::MissingGroundTruth(task.task_id.clone()))?;

    let ctx = KnowledgeContext {
        gateway: env.gateway,
        registry: env.registry,
        kb: &state.kb,
        index: &state.index,
        embedder: env.embedder,
        settings: env.inference,
    };
    let prepared = prepare_task(&ctx, task)?;
    let used: Vec<ExperienceEntry> =
        prepared.usage.retrieved_ids.iter().filter_map(|id| state.kb.bank.get(*id).cloned()).collect();
    if let Some(dir) = run_dir {
        prepared.usage.save(&task_dir(dir, &task.task_id)).map_err(|e| io_err(dir, e))?;
    }

    let rollouts = run_rollouts(env.gateway, env.suite, task, &prepared.prompt, env.runtime, env.settings.rollouts);
    let judge = Judge { gateway: env.gateway, registry: env.registry, params: Judge::default_params() };
    let grades: Vec<Grade> = rollouts
        .trajectories
        .iter()
        .map(|t| grade(t.final_answer.as_deref(), &ground_truth, &task.query, env.settings.grader, Some(&judge)))
        .collect();

    let mut summaries = Vec::new();
    let mut fragments = Vec::new();
    for (trajectory, g) in rollouts.trajectories.iter().zip(&grades) {
        let rctx = RolloutContext {
            task,
            trajectory,
            correct: g.correct,
            usage: &prepared.usage,
            used_experiences: &used,
        };
        let summary = summarize_rollout(env.gateway, env.registry, &rctx, env.settings)?;
        let fragment = if g.correct {
            match extract_skill_fragment(env.gateway, env.registry, &rctx, env.settings) {
                Ok(f) => Some(f),
                Err(AccumulationError::MalformedFragment(why)) => {
                    tracing::warn!(rollout = trajectory.rollout, why = %why, "skill fragment rejected");
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        if let Some(dir) = run_dir {
            let rdir = rollout_dir(dir, &task.task_id, trajectory.rollout);
            write_json(&rdir.join("trajectory.json"), &trajectory.record())?;
            write_json(&rdir.join("grade.json"), g)?;
            write_file(&rdir.join("summary.txt"), &summary.summary_text)?;
            if let Some(f) = &fragment {
                write_file(&rdir.join("fragment.md"), &f.document.render())?;
            }
        }
        summaries.push(summary);
        fragments.extend(fragment);
    }

    let critique =
        match critique_rollouts(env.gateway, env.registry, &summaries, &task.query, &ground_truth, &used, env.settings) {
            Ok(c) => c,
            Err(AccumulationError::NoJsonFound) => {
                tracing::warn!("critique produced no JSON array; no experience updates");
                Critique::default()
            }
            Err(e) => return Err(e),
        };

    let consolidator =
        Consolidator { gateway: env.gateway, registry: env.registry, embedder: env.embedder, settings: env.settings };
    let mut report =
        consolidator.apply_ops(&mut state.kb.bank, &mut state.index, &critique.ops, Some(&task.task_id))?;

    let merged = consolidator.merge_skill(state.kb.skill.as_ref(), &fragments)?;
    state.kb.skill = match merged {
        Some(skill) => match consolidator.refine_skill(&skill)? {
            Some(refined) => {
                report.skill_refined = true;
                Some(refined)
            }
            None => Some(skill),
        },
        None => None,
    };
    Ok(report)
}
