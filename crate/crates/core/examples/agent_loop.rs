//! Runs the tool-using loop against a scripted model: a web search, a code
//! cell, an unknown tool, then the answer. Prints each turn.
//!
//! `cargo run --example agent_loop`

use std::sync::Arc;

use serde_json::json;
use skillbank::gateway::{Gateway, Matcher, PromptRegistry, ScriptedBackend};
use skillbank::runtime::{run_task, AugmentedPrompt, RuntimeConfig, TaskInstance};
use skillbank::tools::{SearchHit, StubSearch, ToolName, ToolSuite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // The scripted model picks the first rule with uses left, so each
    // `Matcher::Any` line below fires once, in order.
    let exec = Arc::new(
        ScriptedBackend::new()
            .tool_call(Matcher::Any, "Let me look this up.", "web_search", json!({"query": "tallest tower in Paris"}))
            .tool_call(Matcher::Any, "Convert the height.", "code_interpreter", json!({"code": "h = 330\nprint(h)"}))
            .tool_call(Matcher::Any, "Checking a map.", "map_lookup", json!({"place": "Paris"}))
            .reply(Matcher::Any, "The tower is 330 metres tall. <answer>330</answer>"),
    );
    let gateway = Gateway::new(exec.clone(), Arc::new(ScriptedBackend::new()));

    let mut suite = ToolSuite::stub();
    suite.search = Arc::new(StubSearch::new(vec![SearchHit {
        title: "Eiffel Tower".into(),
        url: "https://example.org/eiffel".into(),
        snippet: "The Eiffel Tower is 330 m tall.".into(),
    }]));

    let task = TaskInstance::new("demo", "How tall is the tallest tower in Paris, in metres?")
        .with_tools(vec![ToolName::WebSearch, ToolName::CodeInterpreter]);
    let prompt = AugmentedPrompt::plain(&PromptRegistry::builtin(), &task)?;
    let config = RuntimeConfig { seed: Some(7), ..RuntimeConfig::default() };

    let trajectory = run_task(&gateway, &suite, &task, &prompt, &config, 0);
    for turn in &trajectory.turns {
        println!("turn {}: {}", turn.t, turn.assistant_text);
        if let Some(call) = &turn.tool_call {
            println!("  call   {}({})", call.name, call.arguments);
        }
        if let Some(obs) = &turn.observation {
            println!("  result {:?} {:?}: {}", obs.status, obs.error_class, obs.text_body.trim_end().replace('\n', " | "));
        }
    }
    println!("answer: {:?} ({:?})", trajectory.final_answer, trajectory.terminated_reason);
    println!("sampling seed sent to the model: {:?}", exec.requests()[0].params.seed);
    Ok(())
}
