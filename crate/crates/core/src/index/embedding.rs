//! Embedding backends and the content-hash cache in front of them.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IndexError;
use crate::retry::RetryPolicy;

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, IndexError> {
        if values.is_empty() {
            return Err(IndexError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Unit basis vector `e_axis` in `dim` dimensions.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self(v)
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = IndexError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

pub trait EmbeddingBackend: Send + Sync {
    /// Provider name, used in cache keys.
    fn backend_id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, IndexError>;
}

impl<T: EmbeddingBackend + ?Sized> EmbeddingBackend for Arc<T> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, IndexError> {
        (**self).embed(text)
    }
}

/// Caches vectors by a hash of (backend, model, trimmed text).
pub struct CachedEmbedder<B> {
    backend: B,
    cache: RwLock<HashMap<[u8; 32], EmbeddingVector>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<B: EmbeddingBackend> CachedEmbedder<B> {
    pub fn new(backend: B) -> Self {
        Self {
            backend,
            cache: RwLock::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    fn key(&self, text: &str) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.backend.backend_id().as_bytes());
        hasher.update([0]);
        hasher.update(self.backend.model_id().as_bytes());
        hasher.update([0]);
        hasher.update(text.trim().as_bytes());
        hasher.finalize().into()
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, IndexError> {
        if text.trim().is_empty() {
            return Err(IndexError::EmptyText);
        }
        let key = self.key(text);
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let v = self.backend.embed(text.trim())?;
        self.cache
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| v.clone());
        Ok(v)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}

/// Deterministic offline embedder: signed feature hashing of lowercase
/// alphanumeric tokens into `dim` buckets.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim }
    }
}

impl EmbeddingBackend for HashingEmbedder {
    fn backend_id(&self) -> &str {
        "hashing"
    }

    fn model_id(&self) -> &str {
        "feature-hash"
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, IndexError> {
        if text.trim().is_empty() {
            return Err(IndexError::EmptyText);
        }
        let lowered = text.to_lowercase();
        let mut tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push(lowered.trim());
        }
        let mut values = vec![0.0; self.dim];
        for token in tokens {
            let digest = Sha256::digest(token.as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) as usize % self.dim;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        }
        if values.iter().all(|v| *v == 0.0) {
            // Opposite-signed collisions cancelled out; fall back to one bucket.
            values[0] = 1.0;
        }
        EmbeddingVector::new(values)
    }
}

/// Test backend: exact text → vector table, optionally backed by a fallback
/// for texts that are not scripted.
pub struct ScriptedEmbedder {
    table: HashMap<String, EmbeddingVector>,
    fallback: Option<Box<dyn EmbeddingBackend>>,
    calls: AtomicU64,
}

impl ScriptedEmbedder {
    pub fn new() -> Self {
        Self { table: HashMap::new(), fallback: None, calls: AtomicU64::new(0) }
    }

    pub fn with(mut self, text: &str, vector: EmbeddingVector) -> Self {
        self.table.insert(text.trim().to_string(), vector);
        self
    }

    pub fn insert(&mut self, text: &str, vector: EmbeddingVector) {
        self.table.insert(text.trim().to_string(), vector);
    }

    pub fn with_fallback(mut self, backend: impl EmbeddingBackend + 'static) -> Self {
        self.fallback = Some(Box::new(backend));
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Default for ScriptedEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl EmbeddingBackend for ScriptedEmbedder {
    fn backend_id(&self) -> &str {
        "scripted"
    }

    fn model_id(&self) -> &str {
        "table"
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, IndexError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if text.trim().is_empty() {
            return Err(IndexError::EmptyText);
        }
        if let Some(v) = self.table.get(text.trim()) {
            return Ok(v.clone());
        }
        match &self.fallback {
            Some(fallback) => fallback.embed(text),
            None => Err(IndexError::Unscripted(text.to_string())),
        }
    }
}

/// OpenAI-compatible `/embeddings` client.
pub struct HttpEmbedder {
    base_url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn request(&self, text: &str) -> Result<EmbeddingVector, IndexError> {
        let url = format!("{}/embeddings", self.base_url);
        let mut req = ureq::post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::json!({ "model": self.model, "input": text });
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::StatusCode(code) if (400..500).contains(&code) && code != 429 => {
                IndexError::Rejected(format!("HTTP {code}"))
            }
            other => IndexError::BackendUnavailable(other.to_string()),
        })?;
        let parsed: EmbeddingResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| IndexError::BackendUnavailable(e.to_string()))?;
        let first = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| IndexError::BackendUnavailable("empty embedding response".into()))?;
        EmbeddingVector::new(first.embedding)
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn backend_id(&self) -> &str {
        &self.base_url
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, IndexError> {
        if text.trim().is_empty() {
            return Err(IndexError::EmptyText);
        }
        self.retry
            .run(|_| self.request(text), |e| matches!(e, IndexError::BackendUnavailable(_)))
    }
}
