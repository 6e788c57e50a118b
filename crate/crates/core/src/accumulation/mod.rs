//! Phase I: distil rollouts into experience operations and skill updates.

mod consolidate;
mod extract;
mod run;
mod serialize;

pub use consolidate::{Consolidator, ConsolidationReport};
pub use extract::{
    critique_rollouts, extract_skill_fragment, parse_critique, parse_skill_completion, summarize_rollout, Critique,
    SkillFragment, TrajectorySummary,
};
pub use run::{run_accumulation, AccumulationEnv, AccumulationOutcome, KnowledgeState, TaskFailure, CONSOLIDATION_LOG};
pub use serialize::{serialize_trajectory, trajectory_images, RolloutContext};

use crate::eval::GraderKind;
use crate::gateway::{GatewayError, GenerationParams};
use crate::index::IndexError;
use crate::knowledge::KnowledgeError;

#[derive(Debug, thiserror::Error)]
pub enum AccumulationError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("malformed skill fragment: {0}")]
    MalformedFragment(String),
    #[error("task {0} has no ground truth")]
    MissingGroundTruth(String),
    #[error("no JSON array found in completion")]
    NoJsonFound,
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccumulationSettings {
    pub rollouts: usize,
    pub max_ops: usize,
    pub theta_sim: f64,
    pub max_experiences: usize,
    pub max_experience_words: usize,
    pub max_skill_words: usize,
    pub max_images: usize,
    pub summary: GenerationParams,
    /// Carried for configuration parity; no shipped template describes
    /// images separately.
    pub image_summary_max_tokens: u32,
    pub critique: GenerationParams,
    /// Experience merge, library pruning, skill merge and refinement.
    pub consolidation: GenerationParams,
    pub grader: GraderKind,
}

impl Default for AccumulationSettings {
    fn default() -> Self {
        Self {
            rollouts: 4,
            max_ops: 4,
            theta_sim: 0.70,
            max_experiences: 120,
            max_experience_words: 64,
            max_skill_words: 1000,
            max_images: 100,
            summary: GenerationParams::new(0.6, 1.0, 12_288),
            image_summary_max_tokens: 2048,
            critique: GenerationParams::new(0.6, 1.0, 12_288),
            consolidation: GenerationParams::new(0.6, 1.0, 12_288),
            grader: GraderKind::ExactNormalized,
        }
    }
}
