//! OpenAI-compatible `/chat/completions` client.

use serde_json::{json, Value};

use super::backend::{ChatBackend, ChatMessage, Completion, CompletionRequest, MessageRole, TokenUsage, ToolCall};
use super::GatewayError;

pub struct OpenAiChatBackend {
    base_url: String,
    model: String,
    api_key: Option<String>,
    multimodal: bool,
}

impl OpenAiChatBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            multimodal: true,
        }
    }

    pub fn multimodal(mut self, yes: bool) -> Self {
        self.multimodal = yes;
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    fn content(message: &ChatMessage) -> Value {
        if message.images.is_empty() {
            return Value::String(message.text.clone());
        }
        let mut parts = vec![json!({"type": "text", "text": message.text})];
        for image in &message.images {
            parts.push(json!({"type": "text", "text": format!("[{}]", image.name)}));
            parts.push(json!({"type": "image_url", "image_url": {"url": image.payload.data_url()}}));
        }
        Value::Array(parts)
    }

    /// Maps the transcript onto the wire roles. Observations become a `tool`
    /// message answering the call, followed by a user message carrying any
    /// images, since tool messages cannot hold image parts.
    pub fn wire_messages(messages: &[ChatMessage]) -> Vec<Value> {
        let mut out = Vec::with_capacity(messages.len());
        for m in messages {
            match m.role {
                MessageRole::System => out.push(json!({"role": "system", "content": m.text})),
                MessageRole::User => out.push(json!({"role": "user", "content": Self::content(m)})),
                MessageRole::Assistant => {
                    let mut msg = json!({"role": "assistant", "content": m.text});
                    if !m.tool_calls.is_empty() {
                        msg["tool_calls"] = m
                            .tool_calls
                            .iter()
                            .map(|c| {
                                json!({
                                    "id": c.id,
                                    "type": "function",
                                    "function": {"name": c.name, "arguments": c.arguments.to_string()},
                                })
                            })
                            .collect();
                    }
                    out.push(msg);
                }
                MessageRole::Observation => match &m.tool_call_id {
                    Some(id) => {
                        out.push(json!({"role": "tool", "tool_call_id": id, "content": m.text}));
                        if !m.images.is_empty() {
                            let carrier = ChatMessage::user_with_images("Images produced by the tool:", m.images.clone());
                            out.push(json!({"role": "user", "content": Self::content(&carrier)}));
                        }
                    }
                    None => out.push(json!({"role": "user", "content": Self::content(m)})),
                },
            }
        }
        out
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": Self::wire_messages(&request.messages),
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_completion_tokens": request.params.max_tokens,
        });
        if let Some(seed) = request.params.seed {
            body["seed"] = json!(seed);
        }
        if !request.tools.is_empty() {
            body["tools"] = request
                .tools
                .iter()
                .map(|f| json!({"type": "function", "function": f}))
                .collect();
        }
        body
    }

    pub fn parse_response(value: &Value) -> Result<Completion, GatewayError> {
        let message = value
            .pointer("/choices/0/message")
            .ok_or_else(|| GatewayError::Malformed("missing choices[0].message".into()))?;
        let text = message.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
        let mut tool_calls = Vec::new();
        if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
            for (i, call) in calls.iter().enumerate() {
                let name = call
                    .pointer("/function/name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| GatewayError::Malformed("tool call without name".into()))?;
                let raw_args = call.pointer("/function/arguments").cloned().unwrap_or(Value::Null);
                let arguments = match raw_args {
                    Value::String(s) => serde_json::from_str(&s).unwrap_or(Value::String(s)),
                    other => other,
                };
                tool_calls.push(ToolCall {
                    id: call
                        .get("id")
                        .and_then(Value::as_str)
                        .map_or_else(|| format!("call_{i}"), str::to_string),
                    name: name.to_string(),
                    arguments,
                });
            }
        }
        let usage = TokenUsage {
            prompt_tokens: value.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: value
                .pointer("/usage/completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
        };
        Ok(Completion { text, tool_calls, usage })
    }
}

impl ChatBackend for OpenAiChatBackend {
    fn name(&self) -> &str {
        &self.model
    }

    fn supports_images(&self) -> bool {
        self.multimodal
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut req = ureq::post(&url)
            .config()
            .http_status_as_error(false)
            .build()
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.body(request))
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        match status {
            200..=299 => {
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| GatewayError::Malformed(e.to_string()))?;
                Self::parse_response(&value)
            }
            400 if text.contains("context_length") || text.contains("maximum context") => {
                Err(GatewayError::ContextTooLong)
            }
            429 | 500..=599 => Err(GatewayError::BackendUnavailable(format!("HTTP {status}: {text}"))),
            _ => Err(GatewayError::Rejected(format!("HTTP {status}: {text}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{ImagePayload, NamedImage};

    #[test]
    fn parses_tool_calls_with_string_arguments() {
        let value = json!({
            "choices": [{"message": {"content": null, "tool_calls": [
                {"id": "c1", "type": "function", "function": {"name": "web_search", "arguments": "{\"query\":\"q\"}"}}
            ]}}],
            "usage": {"prompt_tokens": 5, "completion_tokens": 2}
        });
        let c = OpenAiChatBackend::parse_response(&value).unwrap();
        assert_eq!(c.text, "");
        assert_eq!(c.tool_calls[0].arguments, json!({"query": "q"}));
        assert_eq!(c.usage.prompt_tokens, 5);
    }

    #[test]
    fn observation_images_ride_in_a_user_message() {
        let img = NamedImage { name: "tool_image_1".into(), payload: ImagePayload::png(vec![1, 2]) };
        let msgs = vec![
            ChatMessage::assistant("", vec![ToolCall { id: "c1".into(), name: "code_interpreter".into(), arguments: json!({"code": "1"}) }]),
            ChatMessage::observation(Some("c1".into()), "ok", vec![img]),
        ];
        let wire = OpenAiChatBackend::wire_messages(&msgs);
        assert_eq!(wire.len(), 3);
        assert_eq!(wire[1]["role"], "tool");
        assert_eq!(wire[2]["role"], "user");
        assert!(wire[2]["content"][2]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
    }
}
