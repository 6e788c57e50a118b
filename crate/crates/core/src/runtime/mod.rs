//! The agent loop: one tool call per turn until an answer or the turn limit.

mod agent;
mod trajectory;

pub use agent::{run_rollouts, run_task, RuntimeConfig};
pub use trajectory::{
    transcript_entries, ObservationDigest, RolloutSet, TerminatedReason, TrajectoryRecord, Trajectory,
    TranscriptEntry, Turn, TurnRecord,
};

use serde::{Deserialize, Serialize};

use crate::gateway::{templates, Completion, GatewayError, PromptRegistry, ToolCall};
use crate::media::{ImagePayload, NamedImage};
use crate::tools::{ToolError, ToolName, ORIGINAL_IMAGE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: String,
    pub query: String,
    #[serde(default)]
    pub images: Vec<ImagePayload>,
    #[serde(default)]
    pub ground_truth: Option<String>,
    #[serde(default)]
    pub active_tools: Vec<ToolName>,
    #[serde(default)]
    pub category: Option<String>,
}

impl TaskInstance {
    pub fn new(task_id: impl Into<String>, query: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            query: query.into(),
            images: Vec::new(),
            ground_truth: None,
            active_tools: Vec::new(),
            category: None,
        }
    }

    pub fn with_ground_truth(mut self, gt: impl Into<String>) -> Self {
        self.ground_truth = Some(gt.into());
        self
    }

    pub fn with_tools(mut self, tools: Vec<ToolName>) -> Self {
        self.active_tools = tools;
        self
    }

    pub fn with_images(mut self, images: Vec<ImagePayload>) -> Self {
        self.images = images;
        self
    }

    /// Input images as shown to models: the first is `original_image`, the
    /// rest `input_image_<n>` (1-based).
    pub fn named_images(&self, max: usize) -> Vec<NamedImage> {
        self.images
            .iter()
            .take(max)
            .enumerate()
            .map(|(i, p)| NamedImage {
                name: if i == 0 { ORIGINAL_IMAGE.to_string() } else { format!("input_image_{}", i + 1) },
                payload: p.clone(),
            })
            .collect()
    }
}

/// System and first user message of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedPrompt {
    pub system_text: String,
    pub user_text: String,
}

/// `direct_cot` without tools, `multi_tool_agent_search` otherwise.
pub fn system_prompt(registry: &PromptRegistry, active_tools: &[ToolName]) -> Result<String, GatewayError> {
    let id = if active_tools.is_empty() { templates::DIRECT_COT } else { templates::MULTI_TOOL_AGENT_SEARCH };
    registry.render(id, &[])
}

impl AugmentedPrompt {
    /// The prompt with no knowledge injected.
    pub fn plain(registry: &PromptRegistry, task: &TaskInstance) -> Result<Self, GatewayError> {
        Ok(Self { system_text: system_prompt(registry, &task.active_tools)?, user_text: task.query.clone() })
    }
}

const OPEN: &str = "<answer>";
const CLOSE: &str = "</answer>";

/// Trimmed content of the last complete `<answer>…</answer>` pair.
pub fn extract_answer(text: &str) -> Option<String> {
    let close = text.rfind(CLOSE)?;
    let open = text[..close].rfind(OPEN)?;
    Some(text[open + OPEN.len()..close].trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallError {
    #[error("{0} tool calls in one turn")]
    MultipleCalls(usize),
    #[error(transparent)]
    UnknownTool(ToolError),
}

/// The single function call of an assistant message, if any.
pub fn parse_tool_call(completion: &Completion) -> Result<Option<ToolCall>, CallError> {
    match completion.tool_calls.as_slice() {
        [] => Ok(None),
        [call] => {
            call.name.parse::<ToolName>().map_err(CallError::UnknownTool)?;
            Ok(Some(call.clone()))
        }
        calls => Err(CallError::MultipleCalls(calls.len())),
    }
}
