//! Grades scripted rollouts three ways and reports average@N, pass@N and
//! tool statistics. Also shows the seeded train/test split.
//!
//! `cargo run --example eval_metrics`

use std::sync::Arc;

use serde_json::json;
use skillbank::eval::{grade, split_dataset, GraderKind, Judge, MetricsReport, OutcomeMatrix};
use skillbank::gateway::{Gateway, Matcher, PromptRegistry, ScriptedBackend};
use skillbank::runtime::{run_rollouts, AugmentedPrompt, RuntimeConfig, TaskInstance};
use skillbank::tools::{ToolName, ToolSuite};

const N: usize = 3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tasks = vec![
        TaskInstance::new("sum", "What is 19 + 23?").with_ground_truth("42"),
        TaskInstance::new("city", "Which city hosts the Louvre?").with_ground_truth("Paris"),
        TaskInstance::new("metal", "Which metal is liquid at room temperature?").with_ground_truth("mercury"),
    ];
    let tasks: Vec<_> = tasks.into_iter().map(|t| t.with_tools(vec![ToolName::CodeInterpreter])).collect();

    // Rollout i is sampled with seed 10 + i, which lets the script vary
    // answers per rollout.
    let exec = Arc::new(
        ScriptedBackend::new()
            .tool_call(Matcher::contains("19 + 23").and(Matcher::Seed(10)), "", "code_interpreter", json!({"code": "s = 42\nprint(s)"}))
            .reply_times(Matcher::contains("19 + 23"), "<answer>42</answer>", usize::MAX)
            .reply_times(Matcher::contains("Louvre").and(Matcher::Seed(12)), "<answer>Lyon</answer>", usize::MAX)
            .reply_times(Matcher::contains("Louvre"), "<answer>Paris, France</answer>", usize::MAX)
            .reply_times(Matcher::contains("room temperature"), "<answer>Hg (mercury)</answer>", usize::MAX),
    );
    let judge_backend = Arc::new(
        ScriptedBackend::new()
            .reply_times(Matcher::contains("Lyon"), "no", usize::MAX)
            .reply_times(Matcher::Any, "yes", usize::MAX),
    );
    let gateway = Gateway::new(exec, judge_backend);
    let registry = PromptRegistry::builtin();
    let suite = ToolSuite::stub();
    let config = RuntimeConfig { seed: Some(10), ..RuntimeConfig::default() };

    let mut records = Vec::new();
    let mut results = Vec::new();
    for task in &tasks {
        let prompt = AugmentedPrompt::plain(&registry, task)?;
        let set = run_rollouts(&gateway, &suite, task, &prompt, &config, N);
        records.extend(set.trajectories.iter().map(|t| t.record()));
        results.push((task, set));
    }

    let judge = Judge { gateway: &gateway, registry: &registry, params: Judge::default_params() };
    for kind in [GraderKind::ExactNormalized, GraderKind::Containment, GraderKind::ModelJudge] {
        let rows = results
            .iter()
            .map(|(task, set)| {
                let truth = task.ground_truth.as_deref().unwrap_or_default();
                set.trajectories
                    .iter()
                    .map(|t| grade(t.final_answer.as_deref(), truth, &task.query, kind, Some(&judge)).correct)
                    .collect()
            })
            .collect();
        let report = MetricsReport::compute(&OutcomeMatrix::new(rows)?, &records, 0);
        println!("== grader {}\n{}", kind.as_str(), report.table());
    }

    let ids: Vec<u32> = (0..10).collect();
    let split = split_dataset(&ids, 4, 6, 2024)?;
    println!("split seed {}: train {:?} test {:?}", split.seed, split.train, split.test);
    Ok(())
}
