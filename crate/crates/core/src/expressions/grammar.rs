use std::collections::BTreeMap;

use crate::targets::Direction;
use crate::{Error, Result};

const BUILTIN: &str = include_str!("../../grammar/rules-v1.grammar");

const REQUIRED: [&str; 6] = [
    "instance",
    "instance.relation",
    "instance.extreme",
    "cluster",
    "class_group",
    "semantic_region",
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Text(String),
    Slot(String),
    Optional(Vec<Token>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    tokens: Vec<Token>,
}

impl Template {
    pub fn parse(src: &str) -> std::result::Result<Template, String> {
        let mut chars = src.chars().peekable();
        let tokens = parse_tokens(&mut chars, false)?;
        Ok(Template { tokens })
    }

    /// Fills the template. `None` when a required slot has no value.
    pub fn render<'a>(&self, slot: impl Fn(&str) -> Option<&'a str>) -> Option<String> {
        let mut out = String::new();
        render_tokens(&self.tokens, &slot, &mut out).then_some(out)
    }

    pub fn slots(&self) -> Vec<&str> {
        fn walk<'t>(tokens: &'t [Token], out: &mut Vec<&'t str>) {
            for t in tokens {
                match t {
                    Token::Slot(s) => out.push(s),
                    Token::Optional(inner) => walk(inner, out),
                    Token::Text(_) => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.tokens, &mut out);
        out
    }
}

fn parse_tokens(chars: &mut std::iter::Peekable<std::str::Chars<'_>>, nested: bool) -> std::result::Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut text = String::new();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                if !text.is_empty() {
                    tokens.push(Token::Text(std::mem::take(&mut text)));
                }
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(c) if c.is_ascii_alphanumeric() || c == '_' => name.push(c),
                        Some(c) => return Err(format!("unexpected {c:?} in slot name")),
                        None => return Err("unterminated slot".into()),
                    }
                }
                if name.is_empty() {
                    return Err("empty slot name".into());
                }
                tokens.push(Token::Slot(name));
            }
            '[' => {
                if !text.is_empty() {
                    tokens.push(Token::Text(std::mem::take(&mut text)));
                }
                tokens.push(Token::Optional(parse_tokens(chars, true)?));
            }
            ']' if nested => {
                if !text.is_empty() {
                    tokens.push(Token::Text(text));
                }
                return Ok(tokens);
            }
            ']' | '}' => return Err(format!("unbalanced {c:?}")),
            c => text.push(c),
        }
    }
    if nested {
        return Err("unterminated optional group".into());
    }
    if !text.is_empty() {
        tokens.push(Token::Text(text));
    }
    Ok(tokens)
}

fn render_tokens<'a>(tokens: &[Token], slot: &impl Fn(&str) -> Option<&'a str>, out: &mut String) -> bool {
    for t in tokens {
        match t {
            Token::Text(s) => out.push_str(s),
            Token::Slot(name) => match slot(name) {
                Some(v) => out.push_str(v),
                None => return false,
            },
            Token::Optional(inner) => {
                let mut buf = String::new();
                if render_tokens(inner, slot, &mut buf) {
                    out.push_str(&buf);
                }
            }
        }
    }
    true
}

/// Versioned set of expression templates and direction phrases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub version: u32,
    templates: BTreeMap<String, Template>,
    directions: BTreeMap<Direction, String>,
}

impl Grammar {
    pub fn builtin() -> Grammar {
        Grammar::parse(BUILTIN).expect("bundled grammar parses")
    }

    pub fn parse(text: &str) -> Result<Grammar> {
        let mut version = None;
        let mut templates = BTreeMap::new();
        let mut directions = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Grammar { line: line_no, reason };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "version" {
                version = Some(value.parse::<u32>().map_err(|e| err(e.to_string()))?);
            } else if let Some(dir) = key.strip_prefix("direction.") {
                let d = Direction::ALL
                    .into_iter()
                    .find(|d| d.as_str() == dir)
                    .ok_or_else(|| err(format!("unknown direction {dir:?}")))?;
                directions.insert(d, value.to_string());
            } else {
                templates.insert(key.to_string(), Template::parse(value).map_err(err)?);
            }
        }
        let version = version.ok_or(Error::Grammar {
            line: 0,
            reason: "missing version".into(),
        })?;
        for key in REQUIRED {
            if !templates.contains_key(key) {
                return Err(Error::Grammar {
                    line: 0,
                    reason: format!("missing template {key:?}"),
                });
            }
        }
        for d in Direction::ALL {
            if !directions.contains_key(&d) {
                return Err(Error::Grammar {
                    line: 0,
                    reason: format!("missing direction.{}", d.as_str()),
                });
            }
        }
        Ok(Grammar {
            version,
            templates,
            directions,
        })
    }

    pub fn template(&self, key: &str) -> &Template {
        &self.templates[key]
    }

    pub fn direction_phrase(&self, d: Direction) -> &str {
        &self.directions[&d]
    }
}

/// English plural of the last word of a category name.
pub fn pluralize(name: &str) -> String {
    let (head, last) = match name.rsplit_once(' ') {
        Some((h, l)) => (format!("{h} "), l),
        None => (String::new(), name),
    };
    let lower = last.to_ascii_lowercase();
    let plural = if lower.ends_with('s') || lower.ends_with('x') || lower.ends_with("ch") || lower.ends_with("sh") {
        format!("{last}es")
    } else if lower.ends_with('y') && !lower.ends_with("ay") && !lower.ends_with("ey") && !lower.ends_with("oy") {
        format!("{}ies", &last[..last.len() - 1])
    } else {
        format!("{last}s")
    };
    format!("{head}{plural}")
}
