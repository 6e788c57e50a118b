//! Accumulates experiences and a skill from two tasks, with both models
//! scripted in-process so it runs offline. Prints the knowledge base after
//! each task.
//!
//! `cargo run --example accumulate_scripted`

use std::sync::Arc;

use serde_json::json;
use skillbank::accumulation::{run_accumulation, AccumulationEnv, AccumulationSettings, KnowledgeState};
use skillbank::eval::GraderKind;
use skillbank::gateway::{Gateway, Matcher, PromptRegistry, ScriptedBackend};
use skillbank::index::{CachedEmbedder, Embedder, EmbeddingBackend, HashingEmbedder};
use skillbank::inference::InferenceSettings;
use skillbank::knowledge::KnowledgeBase;
use skillbank::runtime::{RuntimeConfig, TaskInstance};
use skillbank::tools::{ToolName, ToolSuite};

const SKILL: &str = "---
name: compute-then-answer
description: Work out arithmetic with code before answering.
version: 1.0.0
---

# Compute Then Answer

## Workflow
1. **Translate**: write the question as one expression.
2. **Run**: evaluate it with the code interpreter and print the result.
3. **Answer**: copy the printed value into answer tags.
";

const MANY: usize = usize::MAX;

fn exec_model() -> ScriptedBackend {
    // Rollouts use seeds 1 and 2. The second rollout of the first task
    // guesses instead of computing and gets it wrong.
    ScriptedBackend::new()
        .reply_times(Matcher::contains("v391"), "<answer>391</answer>", MANY)
        .reply_times(Matcher::contains("17 * 23").and(Matcher::Seed(2)), "<answer>381</answer>", MANY)
        .tool_call(Matcher::contains("17 * 23"), "", "code_interpreter", json!({"code": "print('v391')"}))
        .reply_times(Matcher::contains("v504"), "<answer>504</answer>", MANY)
        .tool_calls(Matcher::contains("24 * 21"), "", vec![("code_interpreter", json!({"code": "print('v504')"}))])
}

fn kb_model() -> ScriptedBackend {
    let t = Matcher::template;
    ScriptedBackend::new()
        .reply_times(t("ROLLOUT_SUMMARY"), "The agent either computed the product with code or guessed it.", MANY)
        .reply_times(t("GENERATE_RAW_SKILL_PROMPT"), SKILL, MANY)
        .reply_times(t("MERGE_SKILL_PROMPT"), SKILL, MANY)
        .reply(
            t("CROSS_ROLLOUT_CRITIQUE"),
            r#"The guessing rollout was wrong.
[{"option": "add", "experience": "When a question asks for a product of two-digit numbers, compute it with code instead of mental arithmetic."}]"#,
        )
        .reply(
            t("CROSS_ROLLOUT_CRITIQUE"),
            r#"Both rollouts computed first.
[{"option": "add", "experience": "Print intermediate results in the code interpreter so the final answer can be copied exactly."}]"#,
        )
        .reply_times(t("TASK_DECOMPOSITION_PROMPT"), r#"[{"type": "computation", "query": "multiply two numbers"}]"#, MANY)
        .reply_times(t("EXPERIENCE_REWRITE_PROMPT"), r#"{"E0": "Compute 24 * 21 with code rather than in your head."}"#, MANY)
        .reply_times(t("ADAPT_SKILL_PROMPT"), "# Compute Then Answer\n\nEvaluate 24 * 21 with code, then answer.", MANY)
        .reply_times(t("MERGE_PROMPT"), "Compute products with code and print them before answering.", MANY)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let exec = Arc::new(exec_model());
    let kb = Arc::new(kb_model());
    let gateway = Gateway::new(exec, kb.clone());
    let registry = PromptRegistry::builtin();
    let suite = ToolSuite::stub();
    let embedder: Embedder = CachedEmbedder::new(Arc::new(HashingEmbedder::new(128)) as Arc<dyn EmbeddingBackend>);
    let runtime = RuntimeConfig { seed: Some(1), ..RuntimeConfig::default() };
    let inference = InferenceSettings::default();
    let settings = AccumulationSettings { rollouts: 2, grader: GraderKind::Containment, ..AccumulationSettings::default() };
    let env = AccumulationEnv {
        gateway: &gateway,
        registry: &registry,
        suite: &suite,
        embedder: &embedder,
        runtime: &runtime,
        inference: &inference,
        settings: &settings,
    };

    let tasks = [
        TaskInstance::new("p1", "What is 17 * 23?").with_ground_truth("391"),
        TaskInstance::new("p2", "What is 24 * 21?").with_ground_truth("504"),
    ];
    let mut state = KnowledgeState::new(KnowledgeBase::empty("arithmetic"), &embedder)?;
    for task in tasks {
        let task = task.with_tools(vec![ToolName::CodeInterpreter]);
        let outcome = run_accumulation(&env, std::slice::from_ref(&task), &mut state, None)?;
        println!("== after {} (completed {:?}, failed {:?})", task.task_id, outcome.completed, outcome.failed);
        for change in &outcome.report.changes {
            println!("  change {:?}: +{:?} ~{:?} -{:?}", change.kind, change.added, change.modified, change.removed);
        }
        for entry in state.kb.bank.entries() {
            println!("  [{}] {}", entry.id, entry.text);
        }
        if let Some(skill) = &state.kb.skill {
            println!("  skill {} v{}", skill.metadata.name, skill.metadata.version);
        }
    }
    println!("knowledge-model calls: {}", kb.requests().len());
    Ok(())
}
