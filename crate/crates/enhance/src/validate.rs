use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{EnhanceError, Result};

pub const FORBIDDEN_SUBSTRINGS: [&str; 4] = ["bounding box", "red box", "highlighted", "marked"];
pub const VISUAL_VARIATIONS: usize = 2;

/// The model's reply, parsed but not yet validated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhancementResult {
    pub language_variations: Vec<String>,
    pub visual_variations: Vec<String>,
    /// Message content exactly as returned.
    pub raw: String,
}

#[derive(Debug, Deserialize)]
struct Reply {
    language_variations: Vec<String>,
    visual_variations: Vec<String>,
}

/// Extracts the JSON reply from a chat-completion response body.
pub fn parse_completion(body: &Value) -> Result<EnhancementResult> {
    let content = body["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| EnhanceError::Schema("missing choices[0].message.content".into()))?;
    parse_content(content)
}

pub fn parse_content(content: &str) -> Result<EnhancementResult> {
    let trimmed = content.trim();
    let json = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed);
    let reply: Reply = serde_json::from_str(json).map_err(|e| EnhanceError::Schema(e.to_string()))?;
    Ok(EnhancementResult {
        language_variations: reply.language_variations,
        visual_variations: reply.visual_variations,
        raw: content.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemFlag {
    Valid,
    Empty,
    Duplicate,
    Forbidden,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validated {
    /// False when the counts do not match the contract; every item is then
    /// dropped.
    pub schema_valid: bool,
    /// Aligned with the task-1 inputs; `None` where the rewrite was rejected.
    pub language: Vec<Option<String>>,
    pub visual: Vec<String>,
    pub language_flags: Vec<ItemFlag>,
    pub visual_flags: Vec<ItemFlag>,
}

impl Validated {
    pub fn rejected(&self) -> usize {
        self.language_flags.iter().chain(&self.visual_flags).filter(|f| **f != ItemFlag::Valid).count()
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn flag(text: &str, seen: &mut HashSet<String>) -> ItemFlag {
    let norm = normalize(text);
    if norm.is_empty() {
        ItemFlag::Empty
    } else if FORBIDDEN_SUBSTRINGS.iter().any(|f| norm.contains(f)) {
        ItemFlag::Forbidden
    } else if !seen.insert(norm) {
        ItemFlag::Duplicate
    } else {
        ItemFlag::Valid
    }
}

/// Checks counts, then drops items that are empty, mention the guide
/// apparatus, or repeat an expression already present for the image
/// (`existing`, which should include the task-1 inputs) or an earlier
/// accepted item.
pub fn validate_enhancement(result: &EnhancementResult, inputs: &[String], existing: &[String]) -> Validated {
    let schema_valid =
        result.language_variations.len() == inputs.len() && result.visual_variations.len() == VISUAL_VARIATIONS;
    if !schema_valid {
        return Validated {
            schema_valid,
            language: vec![None; inputs.len()],
            visual: Vec::new(),
            language_flags: Vec::new(),
            visual_flags: Vec::new(),
        };
    }
    let mut seen: HashSet<String> = existing.iter().chain(inputs).map(|s| normalize(s)).collect();
    let language_flags: Vec<ItemFlag> = result.language_variations.iter().map(|t| flag(t, &mut seen)).collect();
    let visual_flags: Vec<ItemFlag> = result.visual_variations.iter().map(|t| flag(t, &mut seen)).collect();
    Validated {
        schema_valid,
        language: result
            .language_variations
            .iter()
            .zip(&language_flags)
            .map(|(t, f)| (*f == ItemFlag::Valid).then(|| t.trim().to_string()))
            .collect(),
        visual: result
            .visual_variations
            .iter()
            .zip(&visual_flags)
            .filter(|(_, f)| **f == ItemFlag::Valid)
            .map(|(t, _)| t.trim().to_string())
            .collect(),
        language_flags,
        visual_flags,
    }
}
