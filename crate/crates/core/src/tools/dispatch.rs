use std::collections::BTreeSet;
use std::sync::Arc;

use serde_json::{Map, Value};

use super::images::{ImageRef, ImageRegistry};
use super::kernel::{KernelFactory, KernelRequest, KernelSession, KernelStatus, StubKernelFactory};
use super::web::{
    extract_main_text, render_hits, ImageQuery, ImageSearchProvider, PageFetcher, ReverseTarget, SearchProvider,
    StubFetcher, StubImageSearch, StubSearch,
};
use super::{ErrorClass, ToolError, ToolName, ToolResult, ToolSpec};
use crate::gateway::ToolCall;
use crate::media::{ImagePayload, NamedImage};

const VISIT_MAX_CHARS: usize = 12_000;

/// Providers shared by every rollout. All members are stateless or
/// internally synchronized.
#[derive(Clone)]
pub struct ToolSuite {
    pub search: Arc<dyn SearchProvider>,
    pub image_search: Arc<dyn ImageSearchProvider>,
    pub fetcher: Arc<dyn PageFetcher>,
    pub kernels: Arc<dyn KernelFactory>,
}

impl ToolSuite {
    /// Stub providers with no results and in-process stub kernels.
    pub fn stub() -> Self {
        Self {
            search: Arc::new(StubSearch::default()),
            image_search: Arc::new(StubImageSearch::default()),
            fetcher: Arc::new(StubFetcher::new()),
            kernels: Arc::new(StubKernelFactory::default()),
        }
    }

    /// Declarations for the given tools, in the given order.
    pub fn declarations(active: &[ToolName]) -> Vec<Value> {
        active.iter().map(|t| ToolSpec::of(*t).declaration()).collect()
    }
}

/// Tool state scoped to one rollout: the image names and the kernel session.
pub struct RolloutTools {
    suite: ToolSuite,
    active: Vec<ToolName>,
    images: ImageRegistry,
    session: Option<Box<dyn KernelSession>>,
    preloaded: BTreeSet<String>,
}

fn str_arg<'a>(args: &'a Map<String, Value>, name: &str) -> Option<&'a str> {
    args.get(name).and_then(Value::as_str)
}

fn usize_arg(args: &Map<String, Value>, name: &str) -> usize {
    args.get(name).and_then(Value::as_u64).unwrap_or(10) as usize
}

impl RolloutTools {
    pub fn new(suite: ToolSuite, active: Vec<ToolName>, originals: &[ImagePayload]) -> Self {
        Self { suite, active, images: ImageRegistry::with_originals(originals), session: None, preloaded: BTreeSet::new() }
    }

    pub fn active(&self) -> &[ToolName] {
        &self.active
    }

    pub fn images(&self) -> &ImageRegistry {
        &self.images
    }

    /// Routes a call. Every failure comes back as a classified error result.
    pub fn dispatch(&mut self, call: &ToolCall) -> ToolResult {
        let result = self.try_dispatch(call);
        let result = result.unwrap_or_else(ToolResult::from);
        tracing::debug!(tool = %call.name, status = ?result.status, class = ?result.error_class, "tool call");
        result
    }

    fn try_dispatch(&mut self, call: &ToolCall) -> Result<ToolResult, ToolError> {
        let name: ToolName = call.name.parse()?;
        if !self.active.contains(&name) {
            return Err(ToolError::ToolNotActive(call.name.clone()));
        }
        let args = ToolSpec::of(name).validate(&call.arguments)?;
        match name {
            ToolName::WebSearch => self.web_search(&args),
            ToolName::ImageSearch => self.image_search(&args),
            ToolName::Visit => self.visit(&args),
            ToolName::CodeInterpreter => self.code_interpreter(str_arg(&args, "code").unwrap_or_default()),
        }
    }

    fn web_search(&self, args: &Map<String, Value>) -> Result<ToolResult, ToolError> {
        let query = str_arg(args, "query").unwrap_or_default().trim();
        if query.is_empty() {
            return Err(ToolError::InvalidParameter { param: "query".into(), reason: "must not be empty".into() });
        }
        let max = usize_arg(args, "max_results");
        let mut hits = self.suite.search.search(query, max)?;
        hits.truncate(max);
        Ok(ToolResult::ok(render_hits(&hits)))
    }

    fn image_search(&self, args: &Map<String, Value>) -> Result<ToolResult, ToolError> {
        let max = usize_arg(args, "max_results");
        let query = match str_arg(args, "search_type").unwrap_or("text") {
            "reverse" => {
                let reference = str_arg(args, "image_url")
                    .filter(|s| !s.trim().is_empty())
                    .ok_or_else(|| ToolError::MissingParameter("image_url".into()))?;
                ImageQuery::Reverse(match self.images.resolve(reference)? {
                    ImageRef::Url(u) => ReverseTarget::Url(u),
                    ImageRef::Registered(img) => ReverseTarget::Image(img.payload),
                })
            }
            _ => {
                let q = str_arg(args, "query")
                    .filter(|s| !s.trim().is_empty())
                    .ok_or_else(|| ToolError::MissingParameter("query".into()))?;
                ImageQuery::Text(q.to_string())
            }
        };
        let mut hits = self.suite.image_search.search_images(&query, max)?;
        hits.truncate(max);
        Ok(ToolResult::ok(render_hits(&hits)))
    }

    fn visit(&self, args: &Map<String, Value>) -> Result<ToolResult, ToolError> {
        let url = str_arg(args, "url").unwrap_or_default().trim();
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(ToolError::InvalidUrl(url.to_string()));
        }
        let goal = str_arg(args, "goal").filter(|g| !g.trim().is_empty());
        let page = self.suite.fetcher.fetch(url)?;
        let body = extract_main_text(&page, goal, VISIT_MAX_CHARS);
        Ok(ToolResult::ok(if body.is_empty() { "The page has no extractable text.".to_string() } else { body }))
    }

    fn drop_session(&mut self) {
        self.session = None;
        self.preloaded.clear();
    }

    fn code_interpreter(&mut self, code: &str) -> Result<ToolResult, ToolError> {
        let session = self.session.get_or_insert_with(|| self.suite.kernels.spawn());
        for img in self.images.named() {
            if self.preloaded.contains(&img.name) {
                continue;
            }
            if let Err(e) = session.request(&KernelRequest::preload(&img.name, img.payload.to_base64())) {
                self.drop_session();
                return Err(e.into());
            }
            self.preloaded.insert(img.name);
        }
        let response = match session.exec(code) {
            Ok(r) => r,
            Err(e) => {
                self.drop_session();
                return Err(ToolError::Kernel(e));
            }
        };

        let mut produced = Vec::new();
        for encoded in &response.images {
            match ImagePayload::from_base64("image/png", encoded) {
                Ok(payload) => {
                    let name = self.images.register_tool_image(payload.clone());
                    produced.push(NamedImage { name, payload });
                }
                Err(e) => tracing::warn!(error = %e, "kernel returned an undecodable image"),
            }
        }

        let mut body = String::new();
        if !response.stdout.is_empty() {
            body.push_str(&response.stdout);
        }
        if !response.stderr.is_empty() {
            body.push_str(&format!("\n[stderr]\n{}", response.stderr));
        }
        if let Some(tb) = &response.traceback {
            body.push_str(&format!("\n[traceback]\n{tb}"));
        }
        if !produced.is_empty() {
            let names: Vec<&str> = produced.iter().map(|i| i.name.as_str()).collect();
            body.push_str(&format!("\nGenerated images: {}", names.join(", ")));
        }
        let body = body.trim().to_string();
        let mut result = match response.status {
            KernelStatus::Ok => ToolResult::ok(if body.is_empty() {
                "Code executed successfully with no output.".to_string()
            } else {
                body
            }),
            KernelStatus::SyntaxError => ToolResult::error(ErrorClass::Syntax, body),
            KernelStatus::RuntimeError => ToolResult::error(ErrorClass::Runtime, body),
        };
        result.images = produced;
        Ok(result)
    }
}
