//! The experience bank: short condition→action tips keyed by stable ids.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;
use crate::textutil::word_count;

/// Default word budget for one experience.
pub const MAX_EXPERIENCE_WORDS: usize = 64;

/// Identifier of the form `E<n>`. Ordered numerically, not lexically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExperienceId(pub u64);

impl ExperienceId {
    pub fn number(self) -> u64 {
        self.0
    }
}

impl fmt::Display for ExperienceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.0)
    }
}

impl FromStr for ExperienceId {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim().trim_start_matches('[').trim_end_matches(']');
        trimmed
            .strip_prefix('E')
            .filter(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|digits| digits.parse().ok())
            .map(ExperienceId)
            .ok_or_else(|| KnowledgeError::MalformedId(s.to_string()))
    }
}

impl Serialize for ExperienceId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExperienceId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Outcome of checking an experience text against the length budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationResult {
    Ok,
    Empty,
    TooLong(usize),
}

impl ValidationResult {
    pub fn is_ok(self) -> bool {
        matches!(self, ValidationResult::Ok)
    }
}

/// Checks `text` against the default 64-word budget.
pub fn validate_experience(text: &str) -> ValidationResult {
    validate_experience_with(text, MAX_EXPERIENCE_WORDS)
}

pub fn validate_experience_with(text: &str, max_words: usize) -> ValidationResult {
    match word_count(text) {
        0 => ValidationResult::Empty,
        n if n > max_words => ValidationResult::TooLong(n),
        _ => ValidationResult::Ok,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperienceEntry {
    pub id: ExperienceId,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_task_id: Option<String>,
}

/// A typed mutation of the bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KnowledgeOp {
    Add { text: String },
    Modify { text: String, target: ExperienceId },
    Merge { text: String, sources: Vec<ExperienceId> },
    Delete { target: ExperienceId },
}

impl KnowledgeOp {
    pub fn kind(&self) -> OpKind {
        match self {
            KnowledgeOp::Add { .. } => OpKind::Add,
            KnowledgeOp::Modify { .. } => OpKind::Modify,
            KnowledgeOp::Merge { .. } => OpKind::Merge,
            KnowledgeOp::Delete { .. } => OpKind::Delete,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            KnowledgeOp::Add { text }
            | KnowledgeOp::Modify { text, .. }
            | KnowledgeOp::Merge { text, .. } => Some(text),
            KnowledgeOp::Delete { .. } => None,
        }
    }

    /// Builds an op from the loose wire form the critique and manage prompts
    /// ask for, checking that the fields present match the option kind.
    pub fn from_wire(wire: &WireOp) -> Result<Self, KnowledgeError> {
        let shape = |why: &str| KnowledgeError::InvalidOpShape(format!("{}: {why}", wire.option));
        let text = wire.experience.as_deref().map(str::trim).filter(|t| !t.is_empty());
        match wire.option.trim().to_ascii_lowercase().as_str() {
            "add" => {
                if wire.modified_from.is_some() || wire.merged_from.is_some() || wire.deleted_id.is_some() {
                    return Err(shape("unexpected reference fields"));
                }
                let text = text.ok_or_else(|| shape("missing experience text"))?;
                Ok(KnowledgeOp::Add { text: text.to_string() })
            }
            "modify" => {
                let text = text.ok_or_else(|| shape("missing experience text"))?;
                let target = wire
                    .modified_from
                    .as_deref()
                    .ok_or_else(|| shape("missing modified_from"))?
                    .parse()?;
                Ok(KnowledgeOp::Modify { text: text.to_string(), target })
            }
            "merge" => {
                let text = text.ok_or_else(|| shape("missing experience text"))?;
                let sources = wire
                    .merged_from
                    .as_ref()
                    .ok_or_else(|| shape("missing merged_from"))?
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<Vec<ExperienceId>, _>>()?;
                if sources.len() < 2 {
                    return Err(shape("merged_from needs at least two ids"));
                }
                Ok(KnowledgeOp::Merge { text: text.to_string(), sources })
            }
            "delete" => {
                if text.is_some() {
                    return Err(shape("delete carries no text"));
                }
                let target = wire
                    .deleted_id
                    .as_deref()
                    .ok_or_else(|| shape("missing deleted_id"))?
                    .parse()?;
                Ok(KnowledgeOp::Delete { target })
            }
            other => Err(KnowledgeError::InvalidOpShape(format!("unknown option {other:?}"))),
        }
    }

    pub fn to_wire(&self) -> WireOp {
        let mut wire = WireOp {
            option: self.kind().as_str().to_string(),
            ..WireOp::default()
        };
        match self {
            KnowledgeOp::Add { text } => wire.experience = Some(text.clone()),
            KnowledgeOp::Modify { text, target } => {
                wire.experience = Some(text.clone());
                wire.modified_from = Some(target.to_string());
            }
            KnowledgeOp::Merge { text, sources } => {
                wire.experience = Some(text.clone());
                wire.merged_from = Some(sources.iter().map(ToString::to_string).collect());
            }
            KnowledgeOp::Delete { target } => wire.deleted_id = Some(target.to_string()),
        }
        wire
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Add,
    Modify,
    Merge,
    Delete,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Modify => "modify",
            OpKind::Merge => "merge",
            OpKind::Delete => "delete",
        }
    }
}

/// JSON form of an op as it appears in model completions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireOp {
    pub option: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experience: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified_from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_from: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deleted_id: Option<String>,
}

/// Ids touched by one applied op.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub kind: OpKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub added: Vec<ExperienceId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modified: Vec<ExperienceId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<ExperienceId>,
    /// Text of removed entries, so deleted insights survive in the log.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed_text: Vec<String>,
}

pub type ChangeLog = Vec<ChangeRecord>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperienceBank {
    entries: BTreeMap<ExperienceId, ExperienceEntry>,
    next_id: u64,
    max_words: usize,
}

impl Default for ExperienceBank {
    fn default() -> Self {
        Self::new()
    }
}

impl ExperienceBank {
    pub fn new() -> Self {
        Self::with_word_limit(MAX_EXPERIENCE_WORDS)
    }

    pub fn with_word_limit(max_words: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            next_id: 0,
            max_words,
        }
    }

    /// Rebuilds a bank from stored entries. `next_id` is raised to exceed
    /// every id present.
    pub fn from_entries(
        entries: Vec<ExperienceEntry>,
        next_id: Option<u64>,
    ) -> Result<Self, KnowledgeError> {
        let mut bank = Self::new();
        for entry in entries {
            let id = entry.id;
            if bank.entries.insert(id, entry).is_some() {
                return Err(KnowledgeError::SchemaViolation(format!("duplicate id {id}")));
            }
        }
        let floor = bank.entries.keys().next_back().map_or(0, |id| id.0 + 1);
        bank.next_id = next_id.unwrap_or(0).max(floor);
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn word_limit(&self) -> usize {
        self.max_words
    }

    pub fn get(&self, id: ExperienceId) -> Option<&ExperienceEntry> {
        self.entries.get(&id)
    }

    pub fn contains(&self, id: ExperienceId) -> bool {
        self.entries.contains_key(&id)
    }

    /// Entries in ascending numeric id order.
    pub fn entries(&self) -> impl Iterator<Item = &ExperienceEntry> {
        self.entries.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = ExperienceId> + '_ {
        self.entries.keys().copied()
    }

    fn check_text(&self, text: &str) -> Result<(), KnowledgeError> {
        match validate_experience_with(text, self.max_words) {
            ValidationResult::Ok => Ok(()),
            ValidationResult::Empty => Err(KnowledgeError::EmptyText),
            ValidationResult::TooLong(n) => Err(KnowledgeError::TextTooLong {
                words: n,
                limit: self.max_words,
            }),
        }
    }

    fn require(&self, id: ExperienceId) -> Result<(), KnowledgeError> {
        if self.entries.contains_key(&id) {
            Ok(())
        } else {
            Err(KnowledgeError::UnknownId(id.to_string()))
        }
    }

    fn insert_new(&mut self, text: &str, source_task_id: Option<&str>) -> ExperienceId {
        let id = ExperienceId(self.next_id);
        self.next_id += 1;
        let entry = ExperienceEntry {
            id,
            text: text.trim().to_string(),
            condition: None,
            action: None,
            created_at: id.0,
            source_task_id: source_task_id.map(str::to_string),
        };
        self.entries.insert(id, entry);
        id
    }

    /// Applies one op in place. On error the bank is unchanged.
    pub fn apply(&mut self, op: &KnowledgeOp) -> Result<ChangeRecord, KnowledgeError> {
        self.apply_from(op, None)
    }

    /// Like [`apply`](Self::apply) but tags new entries with the task that
    /// produced them.
    pub fn apply_from(
        &mut self,
        op: &KnowledgeOp,
        source_task_id: Option<&str>,
    ) -> Result<ChangeRecord, KnowledgeError> {
        if let Some(text) = op.text() {
            self.check_text(text)?;
        }
        let mut record = ChangeRecord {
            kind: op.kind(),
            added: Vec::new(),
            modified: Vec::new(),
            removed: Vec::new(),
            removed_text: Vec::new(),
        };
        match op {
            KnowledgeOp::Add { text } => {
                record.added.push(self.insert_new(text, source_task_id));
            }
            KnowledgeOp::Modify { text, target } => {
                self.require(*target)?;
                let entry = self.entries.get_mut(target).expect("checked above");
                entry.text = text.trim().to_string();
                entry.condition = None;
                entry.action = None;
                record.modified.push(*target);
            }
            KnowledgeOp::Merge { text, sources } => {
                if sources.len() < 2 {
                    return Err(KnowledgeError::InvalidOpShape(
                        "merge needs at least two source ids".into(),
                    ));
                }
                let mut unique = sources.clone();
                unique.sort();
                unique.dedup();
                if unique.len() != sources.len() {
                    return Err(KnowledgeError::InvalidOpShape("merge lists an id twice".into()));
                }
                for id in &unique {
                    self.require(*id)?;
                }
                for id in &unique {
                    let removed = self.entries.remove(id).expect("checked above");
                    record.removed.push(*id);
                    record.removed_text.push(removed.text);
                }
                record.added.push(self.insert_new(text, source_task_id));
            }
            KnowledgeOp::Delete { target } => {
                self.require(*target)?;
                let removed = self.entries.remove(target).expect("checked above");
                record.removed.push(*target);
                record.removed_text.push(removed.text);
            }
        }
        Ok(record)
    }

    /// Removes the oldest entries (by `created_at`, then id) until at most
    /// `cap` remain.
    pub fn evict_oldest(&mut self, cap: usize) -> ChangeLog {
        let mut log = Vec::new();
        if self.entries.len() <= cap {
            return log;
        }
        let mut by_age: Vec<(u64, ExperienceId)> =
            self.entries.values().map(|e| (e.created_at, e.id)).collect();
        by_age.sort();
        let excess = self.entries.len() - cap;
        for (_, id) in by_age.into_iter().take(excess) {
            if let Ok(record) = self.apply(&KnowledgeOp::Delete { target: id }) {
                log.push(record);
            }
        }
        log
    }

    /// Checks every stored invariant; returns a description of each breach.
    pub fn violations(&self, max_entries: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.entries.len() > max_entries {
            out.push(format!(
                "bank holds {} entries, cap is {max_entries}",
                self.entries.len()
            ));
        }
        for entry in self.entries.values() {
            match validate_experience_with(&entry.text, self.max_words) {
                ValidationResult::Ok => {}
                ValidationResult::Empty => out.push(format!("{} has empty text", entry.id)),
                ValidationResult::TooLong(n) => out.push(format!(
                    "{} has {n} words, limit is {}",
                    entry.id, self.max_words
                )),
            }
        }
        if let Some(max) = self.entries.keys().next_back() {
            if self.next_id <= max.0 {
                out.push(format!("next_id {} does not exceed {max}", self.next_id));
            }
        }
        out
    }
}

/// Pure form of [`ExperienceBank::apply`].
pub fn apply_op(
    bank: &ExperienceBank,
    op: &KnowledgeOp,
) -> Result<(ExperienceBank, ChangeRecord), KnowledgeError> {
    let mut next = bank.clone();
    let record = next.apply(op)?;
    Ok((next, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn add(text: &str) -> KnowledgeOp {
        KnowledgeOp::Add { text: text.into() }
    }

    #[test]
    fn validation_cases() {
        assert_eq!(
            validate_experience("When filtering by category, scan every remaining item."),
            ValidationResult::Ok
        );
        assert_eq!(validate_experience(""), ValidationResult::Empty);
        assert_eq!(validate_experience(" \n "), ValidationResult::Empty);
        let long: Vec<&str> = std::iter::repeat("a").take(65).collect();
        assert_eq!(
            validate_experience(&long.join(" ")),
            ValidationResult::TooLong(65)
        );
        assert_eq!(validate_experience(&long[..64].join(" ")), ValidationResult::Ok);
    }

    #[test]
    fn first_add_is_e0() {
        let (bank, record) = apply_op(&ExperienceBank::new(), &add("When X, do Y")).unwrap();
        assert_eq!(bank.ids().collect::<Vec<_>>(), vec![ExperienceId(0)]);
        assert_eq!(bank.next_id(), 1);
        assert_eq!(record.added, vec![ExperienceId(0)]);
    }

    #[test]
    fn merge_replaces_sources() {
        let mut bank = ExperienceBank::new();
        bank.apply(&add("one")).unwrap();
        bank.apply(&add("two")).unwrap();
        let merge = KnowledgeOp::Merge {
            text: "one and two".into(),
            sources: vec![ExperienceId(0), ExperienceId(1)],
        };
        let (after, record) = apply_op(&bank, &merge).unwrap();
        assert_eq!(after.ids().collect::<Vec<_>>(), vec![ExperienceId(2)]);
        assert_eq!(record.removed, vec![ExperienceId(0), ExperienceId(1)]);
        assert_eq!(record.removed_text, vec!["one".to_string(), "two".to_string()]);
    }

    #[test]
    fn modify_unknown_id_fails_without_change() {
        let mut bank = ExperienceBank::new();
        bank.apply(&add("one")).unwrap();
        let before = bank.clone();
        let err = bank
            .apply(&KnowledgeOp::Modify { text: "x".into(), target: ExperienceId(5) })
            .unwrap_err();
        assert!(matches!(err, KnowledgeError::UnknownId(ref id) if id == "E5"));
        assert_eq!(bank, before);
    }

    #[test]
    fn modify_keeps_id_and_age() {
        let mut bank = ExperienceBank::new();
        bank.apply(&add("one")).unwrap();
        bank.apply(&KnowledgeOp::Modify { text: "uno".into(), target: ExperienceId(0) })
            .unwrap();
        let e = bank.get(ExperienceId(0)).unwrap();
        assert_eq!(e.text, "uno");
        assert_eq!(e.created_at, 0);
    }

    #[test]
    fn too_long_text_rejected() {
        let long = vec!["w"; 65].join(" ");
        let err = ExperienceBank::new().apply(&add(&long)).unwrap_err();
        assert!(matches!(err, KnowledgeError::TextTooLong { words: 65, limit: 64 }));
    }

    #[test]
    fn ids_never_recycled() {
        let mut bank = ExperienceBank::new();
        bank.apply(&add("a")).unwrap();
        bank.apply(&KnowledgeOp::Delete { target: ExperienceId(0) }).unwrap();
        let r = bank.apply(&add("b")).unwrap();
        assert_eq!(r.added, vec![ExperienceId(1)]);
    }

    #[test]
    fn wire_shapes() {
        let wire: WireOp = serde_json::from_str(
            r#"{"option":"modify","experience":"better","modified_from":"E17"}"#,
        )
        .unwrap();
        assert_eq!(
            KnowledgeOp::from_wire(&wire).unwrap(),
            KnowledgeOp::Modify { text: "better".into(), target: ExperienceId(17) }
        );
        let bad: WireOp = serde_json::from_str(r#"{"option":"merge","experience":"t","merged_from":["E1"]}"#).unwrap();
        assert!(matches!(KnowledgeOp::from_wire(&bad), Err(KnowledgeError::InvalidOpShape(_))));
        let del: WireOp = serde_json::from_str(r#"{"option":"delete","deleted_id":"E45"}"#).unwrap();
        assert_eq!(
            KnowledgeOp::from_wire(&del).unwrap(),
            KnowledgeOp::Delete { target: ExperienceId(45) }
        );
        let del_with_text: WireOp =
            serde_json::from_str(r#"{"option":"delete","experience":"x","deleted_id":"E45"}"#).unwrap();
        assert!(KnowledgeOp::from_wire(&del_with_text).is_err());
    }

    #[test]
    fn id_parsing() {
        assert_eq!("E12".parse::<ExperienceId>().unwrap(), ExperienceId(12));
        assert_eq!("[E7]".parse::<ExperienceId>().unwrap(), ExperienceId(7));
        assert!("E".parse::<ExperienceId>().is_err());
        assert!("X1".parse::<ExperienceId>().is_err());
        assert!(ExperienceId(9) < ExperienceId(10));
    }

    #[test]
    fn eviction_removes_oldest_first() {
        let mut bank = ExperienceBank::new();
        for i in 0..5 {
            bank.apply(&add(&format!("tip {i}"))).unwrap();
        }
        bank.apply(&KnowledgeOp::Modify { text: "fresh".into(), target: ExperienceId(0) }).unwrap();
        let log = bank.evict_oldest(3);
        assert_eq!(log.len(), 2);
        assert_eq!(
            bank.ids().collect::<Vec<_>>(),
            vec![ExperienceId(2), ExperienceId(3), ExperienceId(4)]
        );
    }
}
