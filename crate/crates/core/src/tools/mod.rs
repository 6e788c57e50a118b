//! Agent tools: declarations, providers, the code kernel client, dispatch.

mod dispatch;
pub mod images;
pub mod kernel;
mod spec;
pub mod web;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dispatch::{RolloutTools, ToolSuite};
pub use images::{ImageRef, ImageRegistry, ORIGINAL_IMAGE};
pub use kernel::{
    KernelError, KernelFactory, KernelLimits, KernelOp, KernelRequest, KernelResponse, KernelSession,
    KernelStatus, ProcessKernel, ProcessKernelFactory, StubKernel, StubKernelFactory,
};
pub use spec::{ParamSpec, ParamType, ToolSpec};
pub use web::{
    extract_main_text, render_hits, HttpFetcher, ImageQuery, ImageSearchProvider, PageFetcher, ProviderError,
    ReverseTarget, SearchHit, SearchProvider, SerperClient, StubFetcher, StubImageSearch, StubSearch,
};

use crate::media::NamedImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    CodeInterpreter,
    WebSearch,
    ImageSearch,
    Visit,
}

impl ToolName {
    pub const ALL: [ToolName; 4] = [ToolName::WebSearch, ToolName::ImageSearch, ToolName::Visit, ToolName::CodeInterpreter];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::CodeInterpreter => "code_interpreter",
            ToolName::WebSearch => "web_search",
            ToolName::ImageSearch => "image_search",
            ToolName::Visit => "visit",
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ToolError::UnknownTool(s.to_string()))
    }
}

/// Tool set used by a benchmark, if it is one of the known ones.
pub fn toolset_for_dataset(dataset: &str) -> Option<Vec<ToolName>> {
    use ToolName::*;
    match dataset {
        "VisualToolBench" => Some(vec![CodeInterpreter, WebSearch, Visit]),
        "TIR-Bench" => Some(vec![CodeInterpreter]),
        "MMSearch-Plus" | "MMBrowseComp" | "AgentVista" => Some(vec![WebSearch, ImageSearch, Visit, CodeInterpreter]),
        "no_tools" => Some(Vec::new()),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Syntax,
    Runtime,
    ToolName,
    Transport,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Syntax => "syntax",
            ErrorClass::Runtime => "runtime",
            ErrorClass::ToolName => "tool_name",
            ErrorClass::Transport => "transport",
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ToolError {
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("tool {0:?} is not available for this task")]
    ToolNotActive(String),
    #[error("missing required parameter {0:?}")]
    MissingParameter(String),
    #[error("invalid parameter {param:?}: {reason}")]
    InvalidParameter { param: String, reason: String },
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error("unknown image reference {0:?}")]
    UnknownImageRef(String),
    #[error("invalid url {0:?}: must start with http:// or https://")]
    InvalidUrl(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl ToolError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ToolError::UnknownTool(_) | ToolError::ToolNotActive(_) => ErrorClass::ToolName,
            ToolError::Provider(ProviderError::Transport(_)) | ToolError::Kernel(_) => ErrorClass::Transport,
            _ => ErrorClass::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub status: ToolStatus,
    pub text_body: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<NamedImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<ErrorClass>,
}

impl ToolResult {
    pub fn ok(text_body: impl Into<String>) -> Self {
        Self { status: ToolStatus::Ok, text_body: text_body.into(), images: Vec::new(), error_class: None }
    }

    pub fn error(class: ErrorClass, text_body: impl Into<String>) -> Self {
        Self { status: ToolStatus::Error, text_body: text_body.into(), images: Vec::new(), error_class: Some(class) }
    }

    pub fn is_error(&self) -> bool {
        self.status == ToolStatus::Error
    }

    pub fn image_names(&self) -> Vec<String> {
        self.images.iter().map(|i| i.name.clone()).collect()
    }
}

impl From<ToolError> for ToolResult {
    fn from(e: ToolError) -> Self {
        ToolResult::error(e.class(), format!("Error: {e}"))
    }
}
