//! Experience bank and skill library: schemas, mutation rules, persistence.

mod experience;
mod skill;
pub mod store;

use std::path::PathBuf;

pub use experience::{
    apply_op, validate_experience, validate_experience_with, ChangeLog, ChangeRecord,
    ExperienceBank, ExperienceEntry, ExperienceId, KnowledgeOp, OpKind, ValidationResult, WireOp,
    MAX_EXPERIENCE_WORDS,
};
pub use skill::{
    parse_skill, render_skill, SkillDocument, SkillMetadata, SkillSection, SkillVersion,
};
pub use store::{KnowledgeBase, Manifest, EMBEDDINGS_FILE, EXPERIENCES_FILE, MANIFEST_FILE, SKILL_FILE};

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("unknown experience id {0}")]
    UnknownId(String),
    #[error("malformed experience id {0:?}")]
    MalformedId(String),
    #[error("invalid op shape: {0}")]
    InvalidOpShape(String),
    #[error("experience text is empty")]
    EmptyText,
    #[error("experience text has {words} words (limit {limit})")]
    TextTooLong { words: usize, limit: usize },
    #[error("skill document has no `---` frontmatter block")]
    MissingFrontmatter,
    #[error("malformed frontmatter: {0}")]
    MalformedFrontmatter(String),
    #[error("malformed skill version {0:?}")]
    MalformedVersion(String),
    #[error("stored knowledge violates its schema: {0}")]
    SchemaViolation(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
