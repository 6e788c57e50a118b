//! Embedding acquisition, caching and similarity retrieval.

mod embedding;
mod retrieval;

pub use embedding::{
    CachedEmbedder, EmbeddingBackend, EmbeddingVector, HashingEmbedder, HttpEmbedder,
    ScriptedEmbedder,
};
pub use retrieval::{cosine, top_k, union_retrieve, ExperienceIndex, ScoredMatch};

/// Model id used when none is configured.
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-small";

/// Cached embedder over a runtime-selected backend.
pub type Embedder = CachedEmbedder<std::sync::Arc<dyn EmbeddingBackend>>;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding vector is empty")]
    EmptyVector,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cosine of an all-zero vector is undefined")]
    ZeroVector,
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("embedding request rejected: {0}")]
    Rejected(String),
    #[error("no scripted embedding for {0:?}")]
    Unscripted(String),
    #[error("embedding sidecar: {0}")]
    Sidecar(String),
}
