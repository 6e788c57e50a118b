//! On-disk layout of a knowledge base directory:
//!
//! ```text
//! kb/
//!   experiences.json   JSON array of entries, ascending numeric id
//!   SKILL.md           the global skill document (absent until one exists)
//!   manifest.json      schema version, namespace, id counter
//!   embeddings.json    vector sidecar (written by the semantic index)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experience::{ExperienceBank, ExperienceEntry};
use super::skill::SkillDocument;
use super::KnowledgeError;

pub const EXPERIENCES_FILE: &str = "experiences.json";
pub const SKILL_FILE: &str = "SKILL.md";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub namespace: String,
    pub next_id: u64,
}

fn io_err(path: &Path, err: std::io::Error) -> KnowledgeError {
    KnowledgeError::Io { path: path.to_path_buf(), source: err }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), KnowledgeError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn bank_to_json(bank: &ExperienceBank) -> String {
    let entries: Vec<&ExperienceEntry> = bank.entries().collect();
    let mut text = serde_json::to_string_pretty(&entries).expect("entries serialize");
    text.push('\n');
    text
}

pub fn bank_from_json(text: &str, next_id: Option<u64>) -> Result<ExperienceBank, KnowledgeError> {
    let entries: Vec<ExperienceEntry> = serde_json::from_str(text)
        .map_err(|e| KnowledgeError::SchemaViolation(e.to_string()))?;
    ExperienceBank::from_entries(entries, next_id)
}

pub fn save_bank(bank: &ExperienceBank, path: &Path) -> Result<(), KnowledgeError> {
    write_atomic(path, bank_to_json(bank).as_bytes())
}

pub fn load_bank(path: &Path) -> Result<ExperienceBank, KnowledgeError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    bank_from_json(&text, None)
}

pub fn save_skill(skill: &SkillDocument, path: &Path) -> Result<(), KnowledgeError> {
    write_atomic(path, skill.render().as_bytes())
}

pub fn load_skill(path: &Path) -> Result<SkillDocument, KnowledgeError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    SkillDocument::parse(&text)
}

/// Both knowledge streams for one namespace.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub namespace: String,
    pub bank: ExperienceBank,
    pub skill: Option<SkillDocument>,
}

impl KnowledgeBase {
    pub fn empty(namespace: impl Into<String>) -> Self {
        Self {
            namespace: namespace.into(),
            bank: ExperienceBank::new(),
            skill: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bank.is_empty() && self.skill.is_none()
    }

    pub fn experiences_path(dir: &Path) -> PathBuf {
        dir.join(EXPERIENCES_FILE)
    }

    pub fn save(&self, dir: &Path) -> Result<(), KnowledgeError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        save_bank(&self.bank, &dir.join(EXPERIENCES_FILE))?;
        let skill_path = dir.join(SKILL_FILE);
        match &self.skill {
            Some(skill) => save_skill(skill, &skill_path)?,
            None if skill_path.exists() => fs::remove_file(&skill_path).map_err(|e| io_err(&skill_path, e))?,
            None => {}
        }
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            namespace: self.namespace.clone(),
            next_id: self.bank.next_id(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// Loads a knowledge base directory. Missing files mean an empty stream;
    /// a missing manifest falls back to the given namespace.
    pub fn load(dir: &Path, namespace: &str) -> Result<Self, KnowledgeError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
            let manifest: Manifest = serde_json::from_str(&text)
                .map_err(|e| KnowledgeError::SchemaViolation(e.to_string()))?;
            if manifest.schema_version != SCHEMA_VERSION {
                return Err(KnowledgeError::SchemaViolation(format!(
                    "schema version {} (expected {SCHEMA_VERSION})",
                    manifest.schema_version
                )));
            }
            Some(manifest)
        } else {
            None
        };
        let bank_path = dir.join(EXPERIENCES_FILE);
        let bank = if bank_path.exists() {
            let text = fs::read_to_string(&bank_path).map_err(|e| io_err(&bank_path, e))?;
            bank_from_json(&text, manifest.as_ref().map(|m| m.next_id))?
        } else {
            ExperienceBank::new()
        };
        let skill_path = dir.join(SKILL_FILE);
        let skill = if skill_path.exists() {
            Some(load_skill(&skill_path)?)
        } else {
            None
        };
        Ok(Self {
            namespace: manifest.map_or_else(|| namespace.to_string(), |m| m.namespace),
            bank,
            skill,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{ExperienceId, KnowledgeOp};

    fn bank_of(n: usize) -> ExperienceBank {
        let mut bank = ExperienceBank::new();
        for i in 0..n {
            bank.apply_from(
                &KnowledgeOp::Add { text: format!("When case {i} appears, check item {i}.") },
                Some("t1"),
            )
            .unwrap();
        }
        bank
    }

    #[test]
    fn bank_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(EXPERIENCES_FILE);
        let bank = bank_of(3);
        save_bank(&bank, &path).unwrap();
        assert_eq!(load_bank(&path).unwrap(), bank);
    }

    #[test]
    fn full_bank_round_trip_keeps_cap() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(EXPERIENCES_FILE);
        let bank = bank_of(120);
        save_bank(&bank, &path).unwrap();
        let loaded = load_bank(&path).unwrap();
        assert_eq!(loaded, bank);
        assert!(loaded.violations(120).is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = r#"[{"id":"E1","text":"a","created_at":0},{"id":"E1","text":"b","created_at":1}]"#;
        assert!(matches!(bank_from_json(text, None), Err(KnowledgeError::SchemaViolation(_))));
    }

    #[test]
    fn json_is_ordered_by_numeric_id() {
        let mut bank = bank_of(11);
        bank.apply(&KnowledgeOp::Delete { target: ExperienceId(0) }).unwrap();
        let json = bank_to_json(&bank);
        let e2 = json.find("\"E2\"").unwrap();
        let e10 = json.find("\"E10\"").unwrap();
        assert!(e2 < e10);
    }

    #[test]
    fn manifest_preserves_id_counter() {
        let dir = tempfile::tempdir().unwrap();
        let mut kb = KnowledgeBase::empty("vtb");
        kb.bank = bank_of(3);
        kb.bank.apply(&KnowledgeOp::Delete { target: ExperienceId(2) }).unwrap();
        kb.save(dir.path()).unwrap();
        let loaded = KnowledgeBase::load(dir.path(), "other").unwrap();
        assert_eq!(loaded.namespace, "vtb");
        assert_eq!(loaded.bank.next_id(), 3);
        assert_eq!(loaded, kb);
    }

    #[test]
    fn missing_directory_files_load_empty() {
        let dir = tempfile::tempdir().unwrap();
        let kb = KnowledgeBase::load(dir.path(), "ns").unwrap();
        assert!(kb.is_empty());
    }

    #[test]
    fn unreadable_path_is_io_error() {
        let err = load_bank(Path::new("/nonexistent/dir/experiences.json")).unwrap_err();
        assert!(matches!(err, KnowledgeError::Io { .. }));
    }
}
