//! Model access: role bindings, prompt templates, backends.

mod backend;
mod http;
mod scripted;
pub mod templates;

pub use backend::{
    ChatBackend, ChatMessage, Completion, CompletionRequest, Gateway, GenerationParams,
    MessageRole, ModelRole, RateLimiter, TokenUsage, ToolCall, UsageRecord, IMAGE_OMITTED,
};
pub use http::OpenAiChatBackend;
pub use scripted::{Matcher, Reply, ScriptRule, ScriptToolCall, ScriptedBackend};
pub use templates::{PromptRegistry, PromptTemplate};

#[derive(Debug, Clone, thiserror::Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("request exceeds the model context window")]
    ContextTooLong,
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("scripted backend exhausted: {0}")]
    ScriptExhausted(String),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template} has unbound slot {{{slot}}}")]
    UnboundSlot { template: String, slot: String },
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::BackendUnavailable(_))
    }
}
