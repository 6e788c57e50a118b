//! Small text helpers shared by the knowledge store and the model-facing
//! parsers.

use serde_json::Value;

/// Number of whitespace-separated tokens. Hyphenated compounds count once.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// First `max` characters of `text` (char boundary safe).
pub fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((idx, _)) => text[..idx].to_string(),
        None => text.to_string(),
    }
}

/// Truncates to `max` characters, appending a marker that states how much
/// was cut.
pub fn truncate_with_marker(text: &str, max: usize) -> String {
    let total = text.chars().count();
    if total <= max {
        return text.to_string();
    }
    format!("{}\n[... truncated {} of {} characters]", truncate_chars(text, max), total - max, total)
}

/// Which top-level JSON shape a caller is looking for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsonShape {
    Array,
    Object,
    Any,
}

/// Returns the last well-formed top-level JSON value of the requested shape
/// embedded in `text`.
///
/// Model completions usually wrap the JSON in prose or a fenced block, and
/// the prompts ask for it at the end, so the scan walks candidate opening
/// brackets from the back and keeps the first one that parses to a value
/// whose span is not nested inside a later value.
pub fn extract_last_json(text: &str, shape: JsonShape) -> Option<Value> {
    let bytes = text.as_bytes();
    let mut best: Option<(usize, usize, Value)> = None;
    for start in (0..bytes.len()).rev() {
        let open = bytes[start];
        let wanted = match shape {
            JsonShape::Array => open == b'[',
            JsonShape::Object => open == b'{',
            JsonShape::Any => open == b'[' || open == b'{',
        };
        if !wanted {
            continue;
        }
        // Skip starts that sit inside an already-accepted later value.
        if let Some((s, e, _)) = &best {
            if start > *s && start < *e {
                continue;
            }
        }
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(value)) = stream.next() {
            let end = start + stream.byte_offset();
            match &best {
                None => best = Some((start, end, value)),
                // An earlier start whose value encloses the current best is the
                // real top-level value.
                Some((s, e, _)) if start < *s && end >= *e => best = Some((start, end, value)),
                Some(_) => {}
            }
        }
    }
    best.map(|(_, _, v)| v)
}
