use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, MessageRole, TokenUsage, ToolCall};
use crate::tools::{ErrorClass, ToolResult, ToolStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedReason {
    Answered,
    MaxTurns,
    FatalError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub t: usize,
    pub assistant_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    /// Result of executing `tool_call`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ToolResult>,
    /// Loop-generated feedback that is not a tool result (nudges,
    /// multiple-call rejections).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub rollout: usize,
    pub turns: Vec<Turn>,
    pub final_answer: Option<String>,
    pub terminated_reason: TerminatedReason,
    pub token_usage: TokenUsage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Every message sent or received, in order.
    #[serde(skip)]
    pub transcript: Vec<ChatMessage>,
}

impl Trajectory {
    pub fn tool_calls(&self) -> impl Iterator<Item = (&ToolCall, Option<&ToolResult>)> {
        self.turns
            .iter()
            .filter_map(|t| t.tool_call.as_ref().map(|c| (c, t.observation.as_ref())))
    }

    pub fn record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            task_id: self.task_id.clone(),
            rollout: self.rollout,
            turns: self
                .turns
                .iter()
                .map(|t| TurnRecord {
                    t: t.t,
                    assistant_text: t.assistant_text.clone(),
                    tool_call: t.tool_call.clone(),
                    observation_digest: t.observation.as_ref().map(ObservationDigest::of),
                    notice: t.notice.clone(),
                    images_produced: t.observation.as_ref().map(ToolResult::image_names).unwrap_or_default(),
                })
                .collect(),
            final_answer: self.final_answer.clone(),
            terminated_reason: self.terminated_reason,
            token_usage: self.token_usage,
            error: self.error.clone(),
        }
    }
}

/// Compact view of a tool result kept in `trajectory.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationDigest {
    pub status: ToolStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<ErrorClass>,
    pub text: String,
}

const DIGEST_CHARS: usize = 2000;

impl ObservationDigest {
    pub fn of(result: &ToolResult) -> Self {
        Self {
            status: result.status,
            error_class: result.error_class,
            text: crate::textutil::truncate_with_marker(&result.text_body, DIGEST_CHARS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub t: usize,
    pub assistant_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_digest: Option<ObservationDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
    #[serde(default)]
    pub images_produced: Vec<String>,
}

/// On-disk form of a trajectory (`trajectory.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub task_id: String,
    pub rollout: usize,
    pub turns: Vec<TurnRecord>,
    #[serde(default)]
    pub final_answer: Option<String>,
    pub terminated_reason: TerminatedReason,
    #[serde(default)]
    pub token_usage: TokenUsage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrajectoryRecord {
    pub fn tool_calls(&self) -> impl Iterator<Item = (&ToolCall, Option<&ObservationDigest>)> {
        self.turns
            .iter()
            .filter_map(|t| t.tool_call.as_ref().map(|c| (c, t.observation_digest.as_ref())))
    }
}

/// One transcript line with images reduced to their names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: MessageRole,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

pub fn transcript_entries(messages: &[ChatMessage]) -> Vec<TranscriptEntry> {
    messages
        .iter()
        .map(|m| TranscriptEntry {
            role: m.role,
            text: m.text.clone(),
            images: m.images.iter().map(|i| i.name.clone()).collect(),
            tool_calls: m
                .tool_calls
                .iter()
                .map(|c| format!("{}({})", c.name, c.arguments))
                .collect(),
            tool_call_id: m.tool_call_id.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSet {
    pub task_id: String,
    pub trajectories: Vec<Trajectory>,
}
