//! Template expansion of cues into referring expressions and removal of
//! ambiguous duplicates.

mod grammar;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

pub use grammar::{pluralize, Grammar, Template};

use crate::targets::{CueSet, Target, TargetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpressionSource {
    Rule,
    LlmLanguage,
    LlmVisual,
}

impl ExpressionSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExpressionSource::Rule => "rule",
            ExpressionSource::LlmLanguage => "llm_language",
            ExpressionSource::LlmVisual => "llm_visual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expression {
    pub text: String,
    pub target_id: String,
    pub source: ExpressionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_expression_id: Option<String>,
}

impl Expression {
    pub fn rule(text: String, target_id: &str) -> Self {
        Self {
            text,
            target_id: target_id.to_string(),
            source: ExpressionSource::Rule,
            parent_expression_id: None,
        }
    }
}

/// Expands a target's cues through the grammar.
///
/// Single instances enumerate `(no relation | each relation) × (no color |
/// color)` followed by `each extreme flag × (no color | color)`; relation
/// phrases that repeat the same direction and landmark category are
/// emitted once. Clusters, class groups and semantic regions each yield
/// their single collective phrase.
pub fn generate_rule_expressions(target: &Target, cues: &CueSet, grammar: &Grammar) -> Vec<Expression> {
    let category = cues.category_name.as_str();
    let plural = pluralize(category);
    let grid = cues.grid_cell.as_str();
    let mut texts: Vec<String> = Vec::new();

    match target.kind {
        TargetKind::Instance => {
            let colors: Vec<Option<&str>> = std::iter::once(None).chain(cues.color.map(|c| Some(c.as_str()))).collect();
            let mut seen = BTreeSet::new();
            let relations: Vec<(&str, &str)> = cues
                .relations
                .iter()
                .filter(|r| seen.insert((r.direction, r.neighbor_category.as_str())))
                .map(|r| (grammar.direction_phrase(r.direction), r.neighbor_category.as_str()))
                .collect();

            let relation_opts = std::iter::once(None).chain(relations.iter().map(Some));
            for rel in relation_opts {
                for &color in &colors {
                    let (key, relation, landmark) = match rel {
                        None => ("instance", None, None),
                        Some(&(phrase, landmark)) => ("instance.relation", Some(phrase), Some(landmark)),
                    };
                    let slot = |s: &str| match s {
                        "color" => color,
                        "category" => Some(category),
                        "grid" => Some(grid),
                        "relation" => relation,
                        "landmark" => landmark,
                        _ => None,
                    };
                    texts.extend(grammar.template(key).render(slot));
                }
            }
            for flag in &cues.extreme_flags {
                for &color in &colors {
                    let slot = |s: &str| match s {
                        "color" => color,
                        "category" => Some(category),
                        "extreme" => Some(flag.as_str()),
                        _ => None,
                    };
                    texts.extend(grammar.template("instance.extreme").render(slot));
                }
            }
        }
        TargetKind::Cluster => {
            let count = target.members.len().to_string();
            let slot = |s: &str| match s {
                "count" => Some(count.as_str()),
                "categories" => Some(plural.as_str()),
                "category" => Some(category),
                "grid" => Some(grid),
                _ => None,
            };
            texts.extend(grammar.template("cluster").render(slot));
        }
        TargetKind::ClassGroup => {
            let slot = |s: &str| match s {
                "categories" => Some(plural.as_str()),
                "category" => Some(category),
                _ => None,
            };
            texts.extend(grammar.template("class_group").render(slot));
        }
        TargetKind::SemanticRegion => {
            let slot = |s: &str| (s == "category").then_some(category);
            texts.extend(grammar.template("semantic_region").render(slot));
        }
    }

    let mut seen = HashSet::new();
    texts
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .map(|t| Expression::rule(t, &target.id))
        .collect()
}

/// Drops every text that is attached to two or more distinct targets of
/// the same image; repeated (text, target) pairs collapse to their first
/// occurrence. Input order is otherwise preserved.
pub fn dedupe_image(expressions: Vec<Expression>) -> Vec<Expression> {
    let mut owners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &expressions {
        owners.entry(e.text.as_str()).or_default().insert(e.target_id.as_str());
    }
    let ambiguous: HashSet<String> = owners
        .into_iter()
        .filter(|(_, targets)| targets.len() > 1)
        .map(|(text, _)| text.to_string())
        .collect();
    let mut seen = HashSet::new();
    expressions
        .into_iter()
        .filter(|e| !ambiguous.contains(&e.text) && seen.insert((e.text.clone(), e.target_id.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{ColorLabel, Direction, ExtremeFlag, GridCell, Relation};
    use crate::{BBox, Mask};

    fn target(kind: TargetKind, category: &str, members: usize) -> Target {
        Target {
            id: "t".into(),
            kind,
            category: category.into(),
            mask: Mask::rect(8, 8, 0, 0, 2, 2),
            bbox: BBox { x0: 0, y0: 0, x1: 1, y1: 1 },
            members: (0..members).map(|i| format!("m{i}")).collect(),
        }
    }

    fn cues(category: &str, grid: GridCell) -> CueSet {
        CueSet {
            category_name: category.into(),
            grid_cell: grid,
            extreme_flags: vec![],
            color: None,
            relations: vec![],
        }
    }

    fn texts(e: &[Expression]) -> Vec<&str> {
        e.iter().map(|e| e.text.as_str()).collect()
    }

    #[test]
    fn bare_instance() {
        let g = Grammar::builtin();
        let out = generate_rule_expressions(&target(TargetKind::Instance, "plane", 0), &cues("plane", GridCell::TopRight), &g);
        assert_eq!(texts(&out), vec!["the plane in the top-right"]);
        assert_eq!(out[0].source, ExpressionSource::Rule);
    }

    #[test]
    fn cluster_phrase() {
        let g = Grammar::builtin();
        let out = generate_rule_expressions(
            &target(TargetKind::Cluster, "large vehicle", 4),
            &cues("large vehicle", GridCell::TopCenter),
            &g,
        );
        assert_eq!(texts(&out), vec!["the group of 4 large vehicles in the top-center"]);
    }

    #[test]
    fn collective_phrases() {
        let g = Grammar::builtin();
        let group = generate_rule_expressions(&target(TargetKind::ClassGroup, "ship", 3), &cues("ship", GridCell::Center), &g);
        assert_eq!(texts(&group), vec!["all ships in the image"]);
        let region = generate_rule_expressions(
            &target(TargetKind::SemanticRegion, "agricultural land", 0),
            &cues("agricultural land", GridCell::Center),
            &g,
        );
        assert_eq!(texts(&region), vec!["all agricultural land in the image"]);
    }

    #[test]
    fn extreme_variants_take_color() {
        let g = Grammar::builtin();
        let mut c = cues("plane", GridCell::Center);
        c.color = Some(ColorLabel::Dark);
        c.extreme_flags = vec![ExtremeFlag::Topmost];
        let out = generate_rule_expressions(&target(TargetKind::Instance, "plane", 0), &c, &g);
        assert_eq!(
            texts(&out),
            vec![
                "the plane in the center",
                "the dark plane in the center",
                "the topmost plane",
                "the topmost dark plane"
            ]
        );
    }

    #[test]
    fn repeated_relation_phrases_collapse() {
        let g = Grammar::builtin();
        let mut c = cues("ship", GridCell::Center);
        for n in ["a", "b"] {
            c.relations.push(Relation {
                direction: Direction::Top,
                neighbor: n.into(),
                neighbor_category: "harbor".into(),
            });
        }
        let out = generate_rule_expressions(&target(TargetKind::Instance, "ship", 0), &c, &g);
        assert_eq!(texts(&out), vec!["the ship in the center", "the ship in the center to the top of a harbor"]);
    }

    fn e(text: &str, target: &str) -> Expression {
        Expression::rule(text.into(), target)
    }

    #[test]
    fn shared_text_is_removed_everywhere() {
        let out = dedupe_image(vec![e("the plane in the top-left", "a"), e("the plane in the top-left", "b")]);
        assert!(out.is_empty());
    }

    #[test]
    fn unique_texts_survive() {
        let input = vec![e("x", "a"), e("y", "b")];
        assert_eq!(dedupe_image(input.clone()), input);
    }

    #[test]
    fn three_targets_one_shared() {
        let input = vec![e("s", "a"), e("ua", "a"), e("s", "b"), e("ub", "b"), e("s", "c"), e("uc", "c")];
        assert_eq!(texts(&dedupe_image(input)), vec!["ua", "ub", "uc"]);
    }
}
