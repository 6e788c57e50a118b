//! Search and page-fetch providers.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::media::ImagePayload;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub title: String,
    pub url: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReverseTarget {
    Url(String),
    Image(ImagePayload),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageQuery {
    Text(String),
    Reverse(ReverseTarget),
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchHit>, ProviderError>;
}

pub trait ImageSearchProvider: Send + Sync {
    fn search_images(&self, query: &ImageQuery, max_results: usize) -> Result<Vec<SearchHit>, ProviderError>;
}

/// Returns raw HTML (or plain text) for a URL.
pub trait PageFetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<String, ProviderError>;
}

pub fn render_hits(hits: &[SearchHit]) -> String {
    if hits.is_empty() {
        return "No results found.".to_string();
    }
    hits.iter()
        .enumerate()
        .map(|(i, h)| format!("{}. {}\n   URL: {}\n   {}", i + 1, h.title, h.url, h.snippet))
        .collect::<Vec<_>>()
        .join("\n\n")
}

// ---------------------------------------------------------------- stubs

/// Canned hits; optionally fails every call.
#[derive(Debug, Default)]
pub struct StubSearch {
    hits: Vec<SearchHit>,
    failure: Option<ProviderError>,
    queries: Mutex<Vec<String>>,
}

impl StubSearch {
    pub fn new(hits: Vec<SearchHit>) -> Self {
        Self { hits, ..Self::default() }
    }

    pub fn failing(error: ProviderError) -> Self {
        Self { failure: Some(error), ..Self::default() }
    }

    /// `n` numbered hits.
    pub fn numbered(n: usize) -> Self {
        Self::new(
            (1..=n)
                .map(|i| SearchHit {
                    title: format!("Result {i}"),
                    url: format!("https://example.org/{i}"),
                    snippet: format!("Snippet {i}"),
                })
                .collect(),
        )
    }

    pub fn queries(&self) -> Vec<String> {
        self.queries.lock().expect("stub lock").clone()
    }
}

impl SearchProvider for StubSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchHit>, ProviderError> {
        self.queries.lock().expect("stub lock").push(query.to_string());
        match &self.failure {
            Some(e) => Err(e.clone()),
            None => Ok(self.hits.iter().take(max_results).cloned().collect()),
        }
    }
}

#[derive(Debug, Default)]
pub struct StubImageSearch {
    hits: Vec<SearchHit>,
    queries: Mutex<Vec<ImageQuery>>,
}

impl StubImageSearch {
    pub fn new(hits: Vec<SearchHit>) -> Self {
        Self { hits, queries: Mutex::new(Vec::new()) }
    }

    pub fn queries(&self) -> Vec<ImageQuery> {
        self.queries.lock().expect("stub lock").clone()
    }
}

impl ImageSearchProvider for StubImageSearch {
    fn search_images(&self, query: &ImageQuery, max_results: usize) -> Result<Vec<SearchHit>, ProviderError> {
        self.queries.lock().expect("stub lock").push(query.clone());
        Ok(self.hits.iter().take(max_results).cloned().collect())
    }
}

/// URL → page body; unknown URLs fail as unreachable.
#[derive(Debug, Default)]
pub struct StubFetcher {
    pages: BTreeMap<String, String>,
}

impl StubFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn page(mut self, url: &str, body: &str) -> Self {
        self.pages.insert(url.to_string(), body.to_string());
        self
    }
}

impl PageFetcher for StubFetcher {
    fn fetch(&self, url: &str) -> Result<String, ProviderError> {
        self.pages
            .get(url)
            .cloned()
            .ok_or_else(|| ProviderError::Transport(format!("unreachable host for {url}")))
    }
}

// ---------------------------------------------------------------- http

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn transport(e: impl std::fmt::Display) -> ProviderError {
    ProviderError::Transport(e.to_string())
}

/// Serper-compatible search API (`/search`, `/images`, `/lens`).
pub struct SerperClient {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl SerperClient {
    pub const API_KEY_ENV: &'static str = "SERPER_API_KEY";

    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Self {
        Self { base_url: base_url.trim_end_matches('/').to_string(), api_key, agent: agent(timeout) }
    }

    pub fn from_env(timeout: Duration) -> Option<Self> {
        std::env::var(Self::API_KEY_ENV)
            .ok()
            .map(|k| Self::new("https://google.serper.dev", k, timeout))
    }

    fn post(&self, path: &str, body: Value) -> Result<Value, ProviderError> {
        let mut resp = self
            .agent
            .post(&format!("{}/{path}", self.base_url))
            .header("X-API-KEY", &self.api_key)
            .send_json(body)
            .map_err(transport)?;
        resp.body_mut().read_json::<Value>().map_err(transport)
    }

    fn hits(value: &Value, list: &str, url_field: &str, max: usize) -> Vec<SearchHit> {
        let field = |v: &Value, k: &str| v.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        value
            .get(list)
            .and_then(Value::as_array)
            .map(|items| {
                items
                    .iter()
                    .take(max)
                    .map(|v| SearchHit {
                        title: field(v, "title"),
                        url: field(v, url_field),
                        snippet: {
                            let s = field(v, "snippet");
                            if s.is_empty() { field(v, "link") } else { s }
                        },
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

impl SearchProvider for SerperClient {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchHit>, ProviderError> {
        let v = self.post("search", json!({"q": query, "num": max_results}))?;
        Ok(Self::hits(&v, "organic", "link", max_results))
    }
}

impl ImageSearchProvider for SerperClient {
    fn search_images(&self, query: &ImageQuery, max_results: usize) -> Result<Vec<SearchHit>, ProviderError> {
        match query {
            ImageQuery::Text(q) => {
                let v = self.post("images", json!({"q": q, "num": max_results}))?;
                Ok(Self::hits(&v, "images", "imageUrl", max_results))
            }
            ImageQuery::Reverse(ReverseTarget::Url(url)) => {
                let v = self.post("lens", json!({"url": url}))?;
                Ok(Self::hits(&v, "organic", "link", max_results))
            }
            ImageQuery::Reverse(ReverseTarget::Image(_)) => Err(ProviderError::Unsupported(
                "reverse search needs a publicly reachable image URL".into(),
            )),
        }
    }
}

pub struct HttpFetcher {
    agent: ureq::Agent,
    max_bytes: u64,
}

impl HttpFetcher {
    pub fn new(timeout: Duration) -> Self {
        Self { agent: agent(timeout), max_bytes: 5 * 1024 * 1024 }
    }
}

impl PageFetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<String, ProviderError> {
        let mut resp = self
            .agent
            .get(url)
            .header("User-Agent", "Mozilla/5.0 (compatible; skillbank)")
            .call()
            .map_err(transport)?;
        resp.body_mut()
            .with_config()
            .limit(self.max_bytes)
            .read_to_string()
            .map_err(transport)
    }
}

// ---------------------------------------------------------------- extraction

/// Converts a page to text. With a goal, paragraphs sharing the most goal
/// terms are kept (in page order) until `max_chars` is reached.
pub fn extract_main_text(page: &str, goal: Option<&str>, max_chars: usize) -> String {
    let text = if page.trim_start().starts_with('<') {
        html2text::from_read(page.as_bytes(), 100).unwrap_or_else(|_| page.to_string())
    } else {
        page.to_string()
    };
    let paragraphs: Vec<&str> = text
        .split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect();

    let terms: Vec<String> = goal
        .unwrap_or_default()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 3)
        .map(str::to_lowercase)
        .collect();

    let mut chosen: Vec<usize> = (0..paragraphs.len()).collect();
    if !terms.is_empty() {
        let score = |p: &str| {
            let lower = p.to_lowercase();
            terms.iter().filter(|t| lower.contains(t.as_str())).count()
        };
        let mut ranked: Vec<(usize, usize)> = paragraphs
            .iter()
            .enumerate()
            .map(|(i, p)| (score(p), i))
            .filter(|(s, _)| *s > 0)
            .collect();
        if !ranked.is_empty() {
            ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut budget = 0;
            chosen.clear();
            for (_, i) in ranked {
                if budget > 0 && budget + paragraphs[i].len() > max_chars {
                    break;
                }
                budget += paragraphs[i].len() + 2;
                chosen.push(i);
            }
            chosen.sort_unstable();
        }
    }

    let mut out = String::new();
    for i in chosen {
        if !out.is_empty() {
            out.push_str("\n\n");
        }
        out.push_str(paragraphs[i]);
        if out.len() >= max_chars {
            break;
        }
    }
    crate::textutil::truncate_chars(&out, max_chars)
}
