use std::thread;

use super::{
    extract_answer, parse_tool_call, AugmentedPrompt, CallError, RolloutSet, TaskInstance, TerminatedReason, Trajectory,
    Turn,
};
use crate::gateway::{ChatMessage, CompletionRequest, Gateway, GenerationParams, ModelRole, TokenUsage};
use crate::media::NamedImage;
use crate::textutil::truncate_with_marker;
use crate::tools::{RolloutTools, ToolResult, ToolSuite};

pub const NUDGE: &str = "Your response contained neither a tool call nor a final answer. \
Please provide a tool call or your final answer inside <answer>...</answer> tags.";

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeConfig {
    pub max_turns: usize,
    pub max_images: usize,
    pub observation_max_chars: usize,
    pub params: GenerationParams,
    /// Rollout `i` samples with `seed + i` when set.
    pub seed: Option<u64>,
    pub concurrency: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            max_turns: 20,
            max_images: 100,
            observation_max_chars: 16_000,
            params: GenerationParams::new(0.6, 1.0, 8192),
            seed: None,
            concurrency: 4,
        }
    }
}

fn multiple_calls_notice(n: usize) -> String {
    format!(
        "Error: you called {n} tools in one turn. Only one tool call per turn is allowed; \
retry with a single tool call."
    )
}

/// Runs one rollout. Never fails: backend failures end the trajectory with
/// `fatal_error` and keep the turns so far.
pub fn run_task(
    gateway: &Gateway,
    suite: &ToolSuite,
    task: &TaskInstance,
    prompt: &AugmentedPrompt,
    config: &RuntimeConfig,
    rollout: usize,
) -> Trajectory {
    let mut tools = RolloutTools::new(suite.clone(), task.active_tools.clone(), &task.images);
    let declarations = ToolSuite::declarations(&task.active_tools);
    let params = config.params.with_seed(config.seed.map(|s| s.wrapping_add(rollout as u64)));

    let task_images = task.named_images(config.max_images);
    let mut images_sent = task_images.len();
    let mut messages = vec![
        ChatMessage::system(prompt.system_text.clone()),
        ChatMessage::user_with_images(prompt.user_text.clone(), task_images),
    ];

    let mut turns = Vec::new();
    let mut usage = TokenUsage::default();
    let mut final_answer = None;
    let mut error = None;
    let mut reason = TerminatedReason::MaxTurns;

    for t in 0..config.max_turns {
        let request = CompletionRequest {
            role: ModelRole::Exec,
            template_id: None,
            messages: messages.clone(),
            params,
            tools: declarations.clone(),
        };
        let completion = match gateway.complete(request) {
            Ok(c) => c,
            Err(e) => {
                tracing::error!(task = %task.task_id, rollout, turn = t, error = %e, "rollout aborted");
                error = Some(e.to_string());
                reason = TerminatedReason::FatalError;
                break;
            }
        };
        usage += completion.usage;
        let text = completion.text.clone();

        if let Some(answer) = extract_answer(&text) {
            messages.push(ChatMessage::assistant(text.clone(), Vec::new()));
            turns.push(Turn { t, assistant_text: text, tool_call: None, observation: None, notice: None });
            final_answer = Some(answer);
            reason = TerminatedReason::Answered;
            break;
        }

        match parse_tool_call(&completion) {
            Ok(Some(call)) => {
                let result = tools.dispatch(&call);
                messages.push(ChatMessage::assistant(text.clone(), vec![call.clone()]));
                messages.push(observation_message(&call.id, &result, config, &mut images_sent));
                turns.push(Turn { t, assistant_text: text, tool_call: Some(call), observation: Some(result), notice: None });
            }
            Err(CallError::UnknownTool(e)) => {
                let call = completion.tool_calls[0].clone();
                let result = ToolResult::from(e);
                messages.push(ChatMessage::assistant(text.clone(), vec![call.clone()]));
                messages.push(observation_message(&call.id, &result, config, &mut images_sent));
                turns.push(Turn { t, assistant_text: text, tool_call: Some(call), observation: Some(result), notice: None });
            }
            Err(CallError::MultipleCalls(n)) => {
                let notice = multiple_calls_notice(n);
                messages.push(ChatMessage::assistant(text.clone(), Vec::new()));
                messages.push(ChatMessage::observation(None, notice.clone(), Vec::new()));
                turns.push(Turn { t, assistant_text: text, tool_call: None, observation: None, notice: Some(notice) });
            }
            Ok(None) => {
                messages.push(ChatMessage::assistant(text.clone(), Vec::new()));
                messages.push(ChatMessage::observation(None, NUDGE, Vec::new()));
                turns.push(Turn { t, assistant_text: text, tool_call: None, observation: None, notice: Some(NUDGE.into()) });
            }
        }
    }

    Trajectory {
        task_id: task.task_id.clone(),
        rollout,
        turns,
        final_answer,
        terminated_reason: reason,
        token_usage: usage,
        error,
        transcript: messages,
    }
}

fn observation_message(
    call_id: &str,
    result: &ToolResult,
    config: &RuntimeConfig,
    images_sent: &mut usize,
) -> ChatMessage {
    let mut text = truncate_with_marker(&result.text_body, config.observation_max_chars);
    let room = config.max_images.saturating_sub(*images_sent);
    let attached: Vec<NamedImage> = result.images.iter().take(room).cloned().collect();
    if attached.len() < result.images.len() {
        text.push_str(&format!(
            "\n[{} image(s) not attached: image limit of {} reached]",
            result.images.len() - attached.len(),
            config.max_images
        ));
    }
    *images_sent += attached.len();
    ChatMessage::observation(Some(call_id.to_string()), text, attached)
}

/// Runs `n` independent rollouts, each with its own tool session, at most
/// `config.concurrency` at a time. Results are ordered by rollout index.
pub fn run_rollouts(
    gateway: &Gateway,
    suite: &ToolSuite,
    task: &TaskInstance,
    prompt: &AugmentedPrompt,
    config: &RuntimeConfig,
    n: usize,
) -> RolloutSet {
    let n = n.max(1);
    let width = config.concurrency.max(1);
    let mut trajectories = Vec::with_capacity(n);
    if width == 1 {
        trajectories.extend((0..n).map(|i| run_task(gateway, suite, task, prompt, config, i)));
    } else {
        let indices: Vec<usize> = (0..n).collect();
        for chunk in indices.chunks(width) {
            thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&i| scope.spawn(move || run_task(gateway, suite, task, prompt, config, i)))
                    .collect();
                for h in handles {
                    trajectories.push(h.join().expect("rollout thread panicked"));
                }
            });
        }
    }
    RolloutSet { task_id: task.task_id.clone(), trajectories }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::gateway::{Matcher, PromptRegistry, Reply, ScriptedBackend};
    use crate::retry::RetryPolicy;
    use crate::tools::{ErrorClass, ToolName};

    fn gateway(backend: ScriptedBackend) -> (Arc<ScriptedBackend>, Gateway) {
        let b = Arc::new(backend);
        let g = Gateway::new(b.clone(), Arc::new(ScriptedBackend::new())).with_retry(RetryPolicy::immediate(3));
        (b, g)
    }

    fn task() -> TaskInstance {
        TaskInstance::new("t1", "What colour?").with_tools(vec![ToolName::CodeInterpreter, ToolName::WebSearch])
    }

    fn prompt(task: &TaskInstance) -> AugmentedPrompt {
        AugmentedPrompt::plain(&PromptRegistry::builtin(), task).unwrap()
    }

    #[test]
    fn immediate_answer_is_one_turn() {
        let (_, g) = gateway(ScriptedBackend::new().reply(Matcher::Any, "<answer>Purple</answer>"));
        let tr = run_task(&g, &ToolSuite::stub(), &task(), &prompt(&task()), &RuntimeConfig::default(), 0);
        assert_eq!(tr.turns.len(), 1);
        assert_eq!(tr.terminated_reason, TerminatedReason::Answered);
        assert_eq!(tr.final_answer.as_deref(), Some("Purple"));
        let usage = g.usage_records();
        assert_eq!(usage[0].params.temperature, 0.6);
        assert_eq!(usage[0].params.top_p, 1.0);
        assert_eq!(usage[0].params.max_tokens, 8192);
    }

    #[test]
    fn never_answering_stops_at_limit() {
        let (_, g) = gateway(ScriptedBackend::new().reply_times(Matcher::Any, "thinking", 100));
        let tr = run_task(&g, &ToolSuite::stub(), &task(), &prompt(&task()), &RuntimeConfig::default(), 0);
        assert_eq!(tr.turns.len(), 20);
        assert_eq!(tr.terminated_reason, TerminatedReason::MaxTurns);
        assert!(tr.turns.iter().all(|t| t.notice.as_deref() == Some(NUDGE)));
    }

    #[test]
    fn code_call_then_answer() {
        let (b, g) = gateway(
            ScriptedBackend::new()
                .tool_call(Matcher::Any, "Let me compute.", "code_interpreter", json!({"code": "answer = 42\nprint(answer)"}))
                .reply(Matcher::Any, "<answer>42</answer>"),
        );
        let tr = run_task(&g, &ToolSuite::stub(), &task(), &prompt(&task()), &RuntimeConfig::default(), 0);
        assert_eq!(tr.turns.len(), 2);
        assert_eq!(tr.turns[0].tool_call.as_ref().unwrap().name, "code_interpreter");
        assert_eq!(tr.turns[0].observation.as_ref().unwrap().text_body, "42");
        // system, user, assistant, observation, assistant
        assert_eq!(tr.transcript.len(), 5);
        assert_eq!(b.requests()[1].messages.len(), 4);
    }

    #[test]
    fn multiple_calls_and_unknown_tool_consume_turns() {
        let (_, g) = gateway(
            ScriptedBackend::new()
                .tool_calls(Matcher::Any, "", vec![("web_search", json!({"query": "a"})), ("web_search", json!({"query": "b"}))])
                .tool_call(Matcher::Any, "", "web_serch", json!({"query": "a"}))
                .reply(Matcher::Any, "<answer>x</answer>"),
        );
        let tr = run_task(&g, &ToolSuite::stub(), &task(), &prompt(&task()), &RuntimeConfig::default(), 0);
        assert_eq!(tr.turns.len(), 3);
        assert!(tr.turns[0].notice.as_ref().unwrap().contains("2 tools"));
        assert_eq!(tr.turns[1].observation.as_ref().unwrap().error_class, Some(ErrorClass::ToolName));
        assert_eq!(tr.terminated_reason, TerminatedReason::Answered);
    }

    #[test]
    fn fatal_backend_error_keeps_turns() {
        let (_, g) = gateway(
            ScriptedBackend::new()
                .reply(Matcher::Any, "hmm")
                .step(Matcher::Any, Reply::Unavailable, 3),
        );
        let tr = run_task(&g, &ToolSuite::stub(), &task(), &prompt(&task()), &RuntimeConfig::default(), 0);
        assert_eq!(tr.terminated_reason, TerminatedReason::FatalError);
        assert_eq!(tr.turns.len(), 1);
        assert!(tr.error.is_some());
    }

    #[test]
    fn observations_are_truncated() {
        let mut suite = ToolSuite::stub();
        suite.kernels = Arc::new(crate::tools::StubKernelFactory::new(vec![(
            "big".into(),
            crate::tools::KernelResponse::ok(&"x".repeat(20_000)),
        )]));
        let (b, g) = gateway(
            ScriptedBackend::new()
                .tool_call(Matcher::Any, "", "code_interpreter", json!({"code": "big"}))
                .reply(Matcher::Any, "<answer>done</answer>"),
        );
        run_task(&g, &suite, &task(), &prompt(&task()), &RuntimeConfig::default(), 0);
        let obs = &b.requests()[1].messages[3].text;
        assert!(obs.ends_with("[... truncated 4000 of 20000 characters]"));
    }

    #[test]
    fn rollout_sessions_are_isolated_and_seeded() {
        let (b, g) = gateway(ScriptedBackend::new().respond_with(Matcher::Any, 100, |req| {
            let code = if req.messages.len() == 2 { "x = 1" } else { "print(x)" };
            if req.messages.len() < 6 {
                crate::gateway::Completion {
                    tool_calls: vec![crate::gateway::ToolCall {
                        id: "c".into(),
                        name: "code_interpreter".into(),
                        arguments: json!({"code": code}),
                    }],
                    ..Default::default()
                }
            } else {
                crate::gateway::Completion::text(format!("<answer>{}</answer>", req.messages[5].text))
            }
        }));
        let config = RuntimeConfig { seed: Some(7), ..RuntimeConfig::default() };
        let set = run_rollouts(&g, &ToolSuite::stub(), &task(), &prompt(&task()), &config, 4);
        assert_eq!(set.trajectories.len(), 4);
        for (i, tr) in set.trajectories.iter().enumerate() {
            assert_eq!(tr.rollout, i);
            assert_eq!(tr.final_answer.as_deref(), Some("1"));
        }
        let mut seeds: Vec<u64> = b.requests().iter().filter_map(|r| r.params.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds, vec![7, 8, 9, 10]);
    }
}
