use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::media::NamedImage;
use crate::retry::RetryPolicy;

/// Which model binding a call goes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    /// Runs the agent loop.
    Exec,
    /// Extracts, consolidates and adapts knowledge.
    Kb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationParams {
    pub fn new(temperature: f64, top_p: f64, max_tokens: u32) -> Self {
        Self { temperature, top_p, max_tokens, seed: None }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidParams(format!("temperature {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidParams("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
    /// A tool result fed back to the model.
    Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<NamedImage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: MessageRole, text: impl Into<String>) -> Self {
        Self { role, text: text.into(), images: Vec::new(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::plain(MessageRole::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::plain(MessageRole::User, text)
    }

    pub fn user_with_images(text: impl Into<String>, images: Vec<NamedImage>) -> Self {
        Self { images, ..Self::plain(MessageRole::User, text) }
    }

    pub fn assistant(text: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Self { tool_calls, ..Self::plain(MessageRole::Assistant, text) }
    }

    pub fn observation(
        tool_call_id: Option<String>,
        text: impl Into<String>,
        images: Vec<NamedImage>,
    ) -> Self {
        Self { images, tool_call_id, ..Self::plain(MessageRole::Observation, text) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default)]
    pub usage: TokenUsage,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role: ModelRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub params: GenerationParams,
    /// Function declarations offered to the model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tools: Vec<serde_json::Value>,
}

impl CompletionRequest {
    /// Concatenated message text, for matching and diagnostics.
    pub fn transcript_text(&self) -> String {
        self.messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join("\n")
    }
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn supports_images(&self) -> bool;
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError>;
}

/// Text substituted for images the bound backend cannot accept.
pub const IMAGE_OMITTED: &str = "[image omitted]";

/// One record per completed call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub role: ModelRole,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub params: GenerationParams,
    pub usage: TokenUsage,
}

/// Token bucket shared by every caller of one backend.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let capacity = f64::from(requests.max(1));
        Self {
            capacity,
            per_second: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("limiter lock");
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * self.per_second;
                state.0 = (state.0 + refill).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / self.per_second)
            };
            std::thread::sleep(wait);
        }
    }
}

struct Binding {
    backend: Arc<dyn ChatBackend>,
    limiter: Option<RateLimiter>,
}

/// Role-separated access to the two model bindings.
pub struct Gateway {
    exec: Binding,
    kb: Binding,
    retry: RetryPolicy,
    usage: Mutex<Vec<UsageRecord>>,
}

impl Gateway {
    pub fn new(exec: Arc<dyn ChatBackend>, kb: Arc<dyn ChatBackend>) -> Self {
        Self {
            exec: Binding { backend: exec, limiter: None },
            kb: Binding { backend: kb, limiter: None },
            retry: RetryPolicy::default(),
            usage: Mutex::new(Vec::new()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, role: ModelRole, per_minute: Option<u32>) -> Self {
        let limiter = per_minute.map(RateLimiter::per_minute);
        match role {
            ModelRole::Exec => self.exec.limiter = limiter,
            ModelRole::Kb => self.kb.limiter = limiter,
        }
        self
    }

    fn binding(&self, role: ModelRole) -> &Binding {
        match role {
            ModelRole::Exec => &self.exec,
            ModelRole::Kb => &self.kb,
        }
    }

    pub fn backend(&self, role: ModelRole) -> &Arc<dyn ChatBackend> {
        &self.binding(role).backend
    }

    pub fn supports_images(&self, role: ModelRole) -> bool {
        self.binding(role).backend.supports_images()
    }

    /// Sends a request to the backend bound to `request.role`.
    pub fn complete(&self, mut request: CompletionRequest) -> Result<Completion, GatewayError> {
        request.params.validate()?;
        let binding = self.binding(request.role);
        if !binding.backend.supports_images() {
            strip_images(&mut request);
        }
        let completion = self.retry.run(
            |_| {
                if let Some(limiter) = &binding.limiter {
                    limiter.acquire();
                }
                binding.backend.complete(&request)
            },
            GatewayError::is_retryable,
        )?;
        self.usage.lock().expect("usage lock").push(UsageRecord {
            role: request.role,
            backend: binding.backend.name().to_string(),
            template_id: request.template_id.clone(),
            params: request.params,
            usage: completion.usage,
        });
        Ok(completion)
    }

    /// Convenience for single-prompt knowledge calls.
    pub fn complete_prompt(
        &self,
        role: ModelRole,
        template_id: &str,
        prompt: String,
        images: Vec<NamedImage>,
        params: GenerationParams,
    ) -> Result<Completion, GatewayError> {
        self.complete(CompletionRequest {
            role,
            template_id: Some(template_id.to_string()),
            messages: vec![ChatMessage::user_with_images(prompt, images)],
            params,
            tools: Vec::new(),
        })
    }

    pub fn usage_records(&self) -> Vec<UsageRecord> {
        self.usage.lock().expect("usage lock").clone()
    }
}

fn strip_images(request: &mut CompletionRequest) {
    let mut dropped = 0;
    for message in &mut request.messages {
        if message.images.is_empty() {
            continue;
        }
        for image in message.images.drain(..) {
            dropped += 1;
            message.text.push_str(&format!("\n{IMAGE_OMITTED} ({})", image.name));
        }
    }
    if dropped > 0 {
        tracing::warn!(
            dropped,
            role = ?request.role,
            "backend does not accept images; replaced with placeholders"
        );
    }
}
