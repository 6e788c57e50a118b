//! Deterministic backend for tests, examples and dry runs.
//!
//! A script is an ordered list of steps. Each call takes the first step with
//! uses left whose matcher accepts the request. Running out of matching
//! steps is an error, never a silent repeat.

use std::fmt;
use std::sync::{Arc, Mutex};

use super::backend::{ChatBackend, Completion, CompletionRequest, ModelRole, ToolCall};
use super::GatewayError;

#[derive(Debug, Clone, PartialEq)]
pub enum Matcher {
    Any,
    Template(String),
    /// No template id (agent loop turns).
    NoTemplate,
    Role(ModelRole),
    /// Substring of any message text.
    Contains(String),
    /// Sampling seed of the request.
    Seed(u64),
    All(Vec<Matcher>),
}

impl Matcher {
    pub fn template(id: &str) -> Self {
        Matcher::Template(id.to_string())
    }

    pub fn contains(needle: &str) -> Self {
        Matcher::Contains(needle.to_string())
    }

    pub fn and(self, other: Matcher) -> Self {
        match self {
            Matcher::All(mut v) => {
                v.push(other);
                Matcher::All(v)
            }
            first => Matcher::All(vec![first, other]),
        }
    }

    pub fn matches(&self, request: &CompletionRequest) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Template(id) => request.template_id.as_deref() == Some(id.as_str()),
            Matcher::NoTemplate => request.template_id.is_none(),
            Matcher::Role(role) => request.role == *role,
            Matcher::Contains(needle) => request.messages.iter().any(|m| m.text.contains(needle)),
            Matcher::Seed(seed) => request.params.seed == Some(*seed),
            Matcher::All(all) => all.iter().all(|m| m.matches(request)),
        }
    }
}

type Responder = Arc<dyn Fn(&CompletionRequest) -> Completion + Send + Sync>;

#[derive(Clone)]
pub enum Reply {
    Fixed(Completion),
    Dynamic(Responder),
    /// Transport failure (retryable).
    Unavailable,
    ContextTooLong,
}

impl fmt::Debug for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reply::Fixed(c) => f.debug_tuple("Fixed").field(&c.text).finish(),
            Reply::Dynamic(_) => f.write_str("Dynamic"),
            Reply::Unavailable => f.write_str("Unavailable"),
            Reply::ContextTooLong => f.write_str("ContextTooLong"),
        }
    }
}

#[derive(Debug, Clone)]
struct Step {
    matcher: Matcher,
    reply: Reply,
    uses_left: usize,
}

pub struct ScriptedBackend {
    name: String,
    multimodal: bool,
    steps: Mutex<Vec<Step>>,
    log: Mutex<Vec<CompletionRequest>>,
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self {
            name: "scripted".into(),
            multimodal: true,
            steps: Mutex::new(Vec::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn text_only(mut self) -> Self {
        self.multimodal = false;
        self
    }

    pub fn step(self, matcher: Matcher, reply: Reply, times: usize) -> Self {
        self.steps.lock().expect("script lock").push(Step { matcher, reply, uses_left: times });
        self
    }

    pub fn reply(self, matcher: Matcher, text: &str) -> Self {
        self.step(matcher, Reply::Fixed(Completion::text(text)), 1)
    }

    pub fn reply_times(self, matcher: Matcher, text: &str, times: usize) -> Self {
        self.step(matcher, Reply::Fixed(Completion::text(text)), times)
    }

    /// One assistant turn carrying a single function call.
    pub fn tool_call(self, matcher: Matcher, text: &str, name: &str, args: serde_json::Value) -> Self {
        self.tool_calls(matcher, text, vec![(name, args)])
    }

    pub fn tool_calls(self, matcher: Matcher, text: &str, calls: Vec<(&str, serde_json::Value)>) -> Self {
        let tool_calls = calls
            .into_iter()
            .enumerate()
            .map(|(i, (name, arguments))| ToolCall {
                id: format!("call_{i}"),
                name: name.to_string(),
                arguments,
            })
            .collect();
        let completion = Completion { text: text.to_string(), tool_calls, ..Completion::default() };
        self.step(matcher, Reply::Fixed(completion), 1)
    }

    pub fn respond_with(
        self,
        matcher: Matcher,
        times: usize,
        f: impl Fn(&CompletionRequest) -> Completion + Send + Sync + 'static,
    ) -> Self {
        self.step(matcher, Reply::Dynamic(Arc::new(f)), times)
    }

    /// Requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().expect("log lock").clone()
    }

    /// Steps with uses left.
    pub fn pending(&self) -> usize {
        self.steps.lock().expect("script lock").iter().filter(|s| s.uses_left > 0).count()
    }
}

/// One step of a script file. Matchers combine with AND; `times` defaults
/// to unlimited.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    /// Match only agent-loop turns (requests without a template id).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub agent_turn: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    /// Match only requests sampled with this seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ScriptToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: serde_json::Value,
}

impl ScriptedBackend {
    /// Builds a backend from declarative rules, e.g. parsed from a JSON or
    /// YAML script file.
    pub fn from_rules(rules: &[ScriptRule]) -> Self {
        rules.iter().fold(ScriptedBackend::new(), |backend, rule| {
            let mut matchers = Vec::new();
            if let Some(t) = &rule.template {
                matchers.push(Matcher::template(t));
            }
            if rule.agent_turn {
                matchers.push(Matcher::NoTemplate);
            }
            if let Some(c) = &rule.contains {
                matchers.push(Matcher::contains(c));
            }
            let seed = rule.seed;
            let completion = Completion {
                text: rule.reply.clone(),
                tool_calls: rule
                    .tool_call
                    .iter()
                    .map(|c| ToolCall { id: "call_0".into(), name: c.name.clone(), arguments: c.arguments.clone() })
                    .collect(),
                ..Completion::default()
            };
            let matcher = match matchers.len() {
                0 => Matcher::Any,
                1 => matchers.remove(0),
                _ => Matcher::All(matchers),
            };
            let times = rule.times.unwrap_or(usize::MAX);
            match seed {
                None => backend.step(matcher, Reply::Fixed(completion), times),
                Some(seed) => backend.step(matcher.and(Matcher::Seed(seed)), Reply::Fixed(completion), times),
            }
        })
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn supports_images(&self) -> bool {
        self.multimodal
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError> {
        self.log.lock().expect("log lock").push(request.clone());
        let reply = {
            let mut steps = self.steps.lock().expect("script lock");
            let step = steps
                .iter_mut()
                .find(|s| s.uses_left > 0 && s.matcher.matches(request))
                .ok_or_else(|| {
                    GatewayError::ScriptExhausted(format!(
                        "{}: no step for template {:?}, last message {:?}",
                        self.name,
                        request.template_id,
                        request
                            .messages
                            .last()
                            .map(|m| m.text.chars().take(120).collect::<String>())
                    ))
                })?;
            step.uses_left -= 1;
            step.reply.clone()
        };
        match reply {
            Reply::Fixed(c) => Ok(c),
            Reply::Dynamic(f) => Ok(f(request)),
            Reply::Unavailable => Err(GatewayError::BackendUnavailable("scripted outage".into())),
            Reply::ContextTooLong => Err(GatewayError::ContextTooLong),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::backend::{ChatMessage, GenerationParams};

    fn req(template: Option<&str>, text: &str) -> CompletionRequest {
        CompletionRequest {
            role: ModelRole::Kb,
            template_id: template.map(str::to_string),
            messages: vec![ChatMessage::user(text)],
            params: GenerationParams::new(0.6, 1.0, 10),
            tools: vec![],
        }
    }

    #[test]
    fn exhaustion_is_an_error() {
        let b = ScriptedBackend::new().reply(Matcher::Any, "once");
        assert_eq!(b.complete(&req(None, "x")).unwrap().text, "once");
        assert!(matches!(b.complete(&req(None, "x")), Err(GatewayError::ScriptExhausted(_))));
    }

    #[test]
    fn first_matching_step_wins() {
        let b = ScriptedBackend::new()
            .reply(Matcher::template("A"), "a")
            .reply(Matcher::contains("needle"), "n")
            .reply(Matcher::Any, "any");
        assert_eq!(b.complete(&req(None, "has needle")).unwrap().text, "n");
        assert_eq!(b.complete(&req(Some("A"), "x")).unwrap().text, "a");
        assert_eq!(b.complete(&req(Some("A"), "x")).unwrap().text, "any");
        assert_eq!(b.pending(), 0);
        assert_eq!(b.requests().len(), 3);
    }

    #[test]
    fn rules_from_json() {
        let rules: Vec<ScriptRule> = serde_json::from_str(
            r#"[{"template": "A", "reply": "a", "times": 1},
                {"agent_turn": true, "reply": "", "tool_call": {"name": "web_search", "arguments": {"query": "q"}}},
                {"reply": "fallback"}]"#,
        )
        .unwrap();
        let b = ScriptedBackend::from_rules(&rules);
        assert_eq!(b.complete(&req(Some("A"), "x")).unwrap().text, "a");
        assert_eq!(b.complete(&req(Some("A"), "x")).unwrap().text, "fallback");
        assert_eq!(b.complete(&req(None, "x")).unwrap().tool_calls[0].name, "web_search");
        assert_eq!(b.complete(&req(None, "x")).unwrap().tool_calls.len(), 1);
    }
}
