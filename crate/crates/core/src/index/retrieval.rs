//! Cosine scoring and thresholded top-k over the experience vectors.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embedding::{CachedEmbedder, EmbeddingBackend, EmbeddingVector};
use super::IndexError;
use crate::knowledge::{ExperienceBank, ExperienceId};

/// Cosine similarity, accumulated in f64.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, IndexError> {
    if a.dim() != b.dim() {
        return Err(IndexError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(IndexError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredMatch {
    pub entry_id: ExperienceId,
    pub score: f64,
}

/// Descending score, then ascending numeric id.
fn rank(a: &ScoredMatch, b: &ScoredMatch) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.entry_id.cmp(&b.entry_id))
}

/// Immutable snapshot of id → vector. Rebuilds produce a new value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperienceIndex {
    vectors: BTreeMap<ExperienceId, EmbeddingVector>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    vectors: BTreeMap<ExperienceId, EmbeddingVector>,
}

impl ExperienceIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.values().next().map(EmbeddingVector::dim)
    }

    pub fn get(&self, id: ExperienceId) -> Option<&EmbeddingVector> {
        self.vectors.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ExperienceId, &EmbeddingVector)> {
        self.vectors.iter().map(|(id, v)| (*id, v))
    }

    pub fn insert(&mut self, id: ExperienceId, vector: EmbeddingVector) -> Result<(), IndexError> {
        if let Some(dim) = self.dim() {
            let only_self = self.vectors.len() == 1 && self.vectors.contains_key(&id);
            if vector.dim() != dim && !only_self {
                return Err(IndexError::DimensionMismatch { expected: dim, found: vector.dim() });
            }
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn remove(&mut self, id: ExperienceId) -> Option<EmbeddingVector> {
        self.vectors.remove(&id)
    }

    /// Every entry scored against `query`, ranked.
    pub fn score_all(&self, query: &EmbeddingVector) -> Result<Vec<ScoredMatch>, IndexError> {
        let mut scored = self
            .vectors
            .iter()
            .map(|(id, v)| Ok(ScoredMatch { entry_id: *id, score: cosine(query, v)? }))
            .collect::<Result<Vec<_>, IndexError>>()?;
        scored.sort_by(rank);
        Ok(scored)
    }

    /// Drops vectors for ids no longer in the bank and embeds entries that
    /// have none. Returns how many entries were embedded.
    pub fn sync<B: EmbeddingBackend>(
        &mut self,
        bank: &ExperienceBank,
        embedder: &CachedEmbedder<B>,
    ) -> Result<usize, IndexError> {
        self.vectors.retain(|id, _| bank.contains(*id));
        let mut embedded = 0;
        for entry in bank.entries() {
            if !self.vectors.contains_key(&entry.id) {
                let v = embedder.embed(&entry.text)?;
                self.insert(entry.id, v)?;
                embedded += 1;
            }
        }
        Ok(embedded)
    }

    pub fn to_json(&self, model: Option<&str>) -> String {
        let sidecar = Sidecar {
            dim: self.dim(),
            model: model.map(str::to_string),
            vectors: self.vectors.clone(),
        };
        let mut text = serde_json::to_string(&sidecar).expect("sidecar serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, IndexError> {
        let sidecar: Sidecar =
            serde_json::from_str(text).map_err(|e| IndexError::Sidecar(e.to_string()))?;
        let mut index = Self::new();
        for (id, v) in sidecar.vectors {
            if let Some(dim) = sidecar.dim {
                if v.dim() != dim {
                    return Err(IndexError::DimensionMismatch { expected: dim, found: v.dim() });
                }
            }
            index.insert(id, v)?;
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path, model: Option<&str>) -> Result<(), IndexError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| IndexError::Sidecar(e.to_string()))?;
        }
        fs::write(path, self.to_json(model)).map_err(|e| IndexError::Sidecar(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let text = fs::read_to_string(path).map_err(|e| IndexError::Sidecar(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// At most `k` entries scoring strictly above `tau_min`, ranked by score
/// descending then ascending id.
pub fn top_k(
    query: &EmbeddingVector,
    index: &ExperienceIndex,
    k: usize,
    tau_min: f64,
) -> Result<Vec<ScoredMatch>, IndexError> {
    let mut scored: Vec<ScoredMatch> = Vec::with_capacity(index.len());
    for (id, v) in index.iter() {
        let score = cosine(query, v)?;
        if score > tau_min {
            scored.push(ScoredMatch { entry_id: id, score });
        }
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k, rank);
        scored.truncate(k);
    }
    scored.sort_by(rank);
    Ok(scored)
}

/// Union of per-query top-k, one match per id carrying its best score,
/// ranked like [`top_k`].
pub fn union_retrieve(
    queries: &[EmbeddingVector],
    index: &ExperienceIndex,
    k: usize,
    tau_min: f64,
) -> Result<Vec<ScoredMatch>, IndexError> {
    let mut best: HashMap<ExperienceId, f64> = HashMap::new();
    for q in queries {
        for m in top_k(q, index, k, tau_min)? {
            best.entry(m.entry_id)
                .and_modify(|s| *s = s.max(m.score))
                .or_insert(m.score);
        }
    }
    let mut out: Vec<ScoredMatch> = best
        .into_iter()
        .map(|(entry_id, score)| ScoredMatch { entry_id, score })
        .collect();
    out.sort_by(rank);
    Ok(out)
}
