//! SKILL.md documents: YAML frontmatter plus markdown sections.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::Value as JsonValue;

use super::KnowledgeError;
use crate::textutil::word_count;

const FENCE_MARKERS: [&str; 2] = ["```", "~~~"];

/// Dotted `major.minor.patch` version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SkillVersion {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
}

impl SkillVersion {
    pub const INITIAL: SkillVersion = SkillVersion { major: 1, minor: 0, patch: 0 };

    pub fn parse(raw: &str) -> Result<Self, KnowledgeError> {
        let bad = || KnowledgeError::MalformedVersion(raw.to_string());
        let parts: Vec<&str> = raw.trim().split('.').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut nums = [0u64; 3];
        for (slot, part) in nums.iter_mut().zip(&parts) {
            if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            *slot = part.parse().map_err(|_| bad())?;
        }
        Ok(SkillVersion { major: nums[0], minor: nums[1], patch: nums[2] })
    }

    pub fn bump_major(self) -> Self {
        SkillVersion { major: self.major + 1, minor: 0, patch: 0 }
    }
}

impl fmt::Display for SkillVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillMetadata {
    pub name: String,
    pub description: String,
    pub version: SkillVersion,
    /// Frontmatter keys other than name/description/version, kept verbatim.
    pub extra: BTreeMap<String, JsonValue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillSection {
    /// The full heading line (`# Title`, `## Workflow`), or `None` for text
    /// that precedes the first heading.
    pub heading: Option<String>,
    /// Raw markdown under the heading with surrounding blank lines removed.
    pub body: String,
    /// A blank line separates the heading from a non-empty body.
    pub spaced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillDocument {
    pub metadata: SkillMetadata,
    pub sections: Vec<SkillSection>,
}

impl SkillDocument {
    pub fn parse(markdown: &str) -> Result<Self, KnowledgeError> {
        parse_skill(markdown)
    }

    pub fn render(&self) -> String {
        render_skill(self)
    }

    /// Whitespace-token count of the rendered document.
    pub fn word_count(&self) -> usize {
        word_count(&self.render())
    }

    /// The markdown body without frontmatter.
    pub fn render_body(&self) -> String {
        render_sections(&self.sections)
    }
}

fn is_fence(line: &str) -> Option<&'static str> {
    let trimmed = line.trim_start();
    FENCE_MARKERS.into_iter().find(|m| trimmed.starts_with(m))
}

fn is_top_heading(line: &str) -> bool {
    let hashes = line.bytes().take_while(|b| *b == b'#').count();
    if hashes == 0 || hashes > 2 {
        return false;
    }
    matches!(line.as_bytes().get(hashes), None | Some(b' ') | Some(b'\t'))
}

fn trim_blank_lines(lines: &[&str]) -> String {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

fn yaml_scalar_to_string(value: &serde_yaml::Value) -> Option<String> {
    match value {
        serde_yaml::Value::String(s) => Some(s.clone()),
        serde_yaml::Value::Number(n) => Some(n.to_string()),
        serde_yaml::Value::Bool(b) => Some(b.to_string()),
        serde_yaml::Value::Null => Some(String::new()),
        _ => None,
    }
}

/// Parses a SKILL.md document. Leading whitespace before the opening `---`
/// is tolerated; anything else is not.
pub fn parse_skill(markdown: &str) -> Result<SkillDocument, KnowledgeError> {
    let text = markdown.trim_start();
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some("---") {
        return Err(KnowledgeError::MissingFrontmatter);
    }
    let mut front = Vec::new();
    let mut closed = false;
    for line in lines.by_ref() {
        if line.trim_end() == "---" {
            closed = true;
            break;
        }
        front.push(line);
    }
    if !closed {
        return Err(KnowledgeError::MissingFrontmatter);
    }

    let yaml: serde_yaml::Value = serde_yaml::from_str(&front.join("\n"))
        .map_err(|e| KnowledgeError::MalformedFrontmatter(e.to_string()))?;
    let map = match yaml {
        serde_yaml::Value::Mapping(map) => map,
        _ => return Err(KnowledgeError::MalformedFrontmatter("frontmatter is not a mapping".into())),
    };
    let mut name = None;
    let mut description = None;
    let mut version = None;
    let mut extra = BTreeMap::new();
    for (key, value) in map {
        let key = yaml_scalar_to_string(&key)
            .ok_or_else(|| KnowledgeError::MalformedFrontmatter("non-scalar key".into()))?;
        match key.as_str() {
            "name" => name = yaml_scalar_to_string(&value),
            "description" => description = yaml_scalar_to_string(&value),
            "version" => version = Some(yaml_scalar_to_string(&value).unwrap_or_default()),
            _ => {
                let json = serde_json::to_value(&value)
                    .map_err(|e| KnowledgeError::MalformedFrontmatter(e.to_string()))?;
                extra.insert(key, json);
            }
        }
    }
    let name = name
        .map(|n| n.trim().to_string())
        .filter(|n| !n.is_empty())
        .ok_or_else(|| KnowledgeError::MalformedFrontmatter("missing name".into()))?;
    let description = description
        .ok_or_else(|| KnowledgeError::MalformedFrontmatter("missing description".into()))?
        .trim_end()
        .to_string();
    let version = SkillVersion::parse(
        &version.ok_or_else(|| KnowledgeError::MalformedVersion(String::new()))?,
    )?;

    let body: Vec<&str> = lines.collect();
    let sections = split_sections(&body);
    Ok(SkillDocument {
        metadata: SkillMetadata { name, description, version, extra },
        sections,
    })
}

fn split_sections(lines: &[&str]) -> Vec<SkillSection> {
    let mut sections = Vec::new();
    let mut heading: Option<String> = None;
    let mut start = 0;
    let mut fence: Option<&str> = None;
    for (i, line) in lines.iter().enumerate() {
        if let Some(open) = fence {
            if line.trim_start().starts_with(open) {
                fence = None;
            }
            continue;
        }
        if let Some(marker) = is_fence(line) {
            fence = Some(marker);
            continue;
        }
        if is_top_heading(line) {
            if heading.is_some() || !trim_blank_lines(&lines[start..i]).is_empty() {
                sections.push(section(heading.take(), &lines[start..i]));
            }
            heading = Some(line.trim_end().to_string());
            start = i + 1;
        }
    }
    let rest = &lines[start.min(lines.len())..];
    if heading.is_some() || !trim_blank_lines(rest).is_empty() {
        sections.push(section(heading, rest));
    }
    sections
}

fn section(heading: Option<String>, lines: &[&str]) -> SkillSection {
    let body = trim_blank_lines(lines);
    let spaced = heading.is_some() && !body.is_empty() && lines.first().is_some_and(|l| l.trim().is_empty());
    SkillSection { heading, body, spaced }
}

/// True when `s` written unquoted after `key: ` reads back as the same string.
fn plain_scalar_ok(s: &str) -> bool {
    if s.is_empty() || s.trim() != s || s.contains('\n') {
        return false;
    }
    matches!(
        serde_yaml::from_str::<serde_yaml::Value>(&format!("k: {s}")),
        Ok(serde_yaml::Value::Mapping(m)) if m.len() == 1 && m.get("k").and_then(|v| v.as_str()) == Some(s)
    )
}

fn render_name(name: &str) -> String {
    if plain_scalar_ok(name) {
        name.to_string()
    } else {
        serde_json::to_string(name).expect("string serializes")
    }
}

fn render_description(desc: &str) -> String {
    let first_line_indented = desc.lines().next().is_some_and(|l| l.starts_with([' ', '\t']));
    if desc.is_empty() || first_line_indented || desc.contains('\t') {
        return format!(" {}", serde_json::to_string(desc).expect("string serializes"));
    }
    let mut out = String::from(" |");
    for line in desc.lines() {
        out.push('\n');
        if !line.is_empty() {
            out.push_str("  ");
            out.push_str(line);
        }
    }
    out
}

fn render_sections(sections: &[SkillSection]) -> String {
    sections
        .iter()
        .map(|s| match (&s.heading, s.body.is_empty()) {
            (Some(h), true) => h.clone(),
            (Some(h), false) if s.spaced => format!("{h}\n\n{}", s.body),
            (Some(h), false) => format!("{h}\n{}", s.body),
            (None, _) => s.body.clone(),
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Renders a document so that [`parse_skill`] returns an equal structure.
pub fn render_skill(doc: &SkillDocument) -> String {
    let meta = &doc.metadata;
    let mut out = String::from("---\n");
    out.push_str(&format!("name: {}\n", render_name(&meta.name)));
    out.push_str(&format!("description:{}\n", render_description(&meta.description)));
    out.push_str(&format!("version: {}\n", meta.version));
    for (key, value) in &meta.extra {
        out.push_str(&format!("{}: {}\n", render_name(key), value));
    }
    out.push_str("---\n");
    let body = render_sections(&doc.sections);
    if !body.is_empty() {
        out.push('\n');
        out.push_str(&body);
        out.push('\n');
    }
    out
}
