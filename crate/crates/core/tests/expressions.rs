use std::collections::{BTreeMap, BTreeSet};

use forge_core::expressions::{dedupe_image, generate_rule_expressions, Expression, Grammar};
use forge_core::targets::{ColorLabel, CueSet, Direction, ExtremeFlag, GridCell, Relation, Target, TargetKind};
use forge_core::{BBox, Mask};
use proptest::prelude::*;

fn target(kind: TargetKind, category: &str, members: usize) -> Target {
    Target {
        id: "img-t000".into(),
        kind,
        category: category.into(),
        mask: Mask::rect(480, 480, 0, 0, 1, 1),
        bbox: BBox { x0: 0, y0: 0, x1: 0, y1: 0 },
        members: (0..members).map(|i| format!("m{i}")).collect(),
    }
}

fn relation(direction: Direction, category: &str) -> Relation {
    Relation {
        direction,
        neighbor: "n".into(),
        neighbor_category: category.into(),
    }
}

fn texts(v: &[Expression]) -> Vec<&str> {
    v.iter().map(|e| e.text.as_str()).collect()
}

#[test]
fn plane_cue_table_expands_to_six_strings() {
    let cues = CueSet {
        category_name: "plane".into(),
        grid_cell: GridCell::TopRight,
        extreme_flags: vec![],
        color: Some(ColorLabel::Light),
        relations: vec![relation(Direction::BottomRight, "plane"), relation(Direction::TopRight, "plane")],
    };
    let out = generate_rule_expressions(&target(TargetKind::Instance, "plane", 0), &cues, &Grammar::builtin());
    assert_eq!(
        texts(&out),
        vec![
            "the plane in the top-right",
            "the light plane in the top-right",
            "the plane in the top-right to the bottom-right of a plane",
            "the light plane in the top-right to the bottom-right of a plane",
            "the plane in the top-right to the top-right of a plane",
            "the light plane in the top-right to the top-right of a plane",
        ]
    );
}

#[test]
fn collective_phrases() {
    let g = Grammar::builtin();
    let cues = |cat: &str, grid| CueSet {
        category_name: cat.into(),
        grid_cell: grid,
        extreme_flags: vec![],
        color: None,
        relations: vec![],
    };
    let out = generate_rule_expressions(&target(TargetKind::Cluster, "large vehicle", 4), &cues("large vehicle", GridCell::TopCenter), &g);
    assert_eq!(texts(&out), vec!["the group of 4 large vehicles in the top-center"]);
    let out = generate_rule_expressions(&target(TargetKind::ClassGroup, "ship", 3), &cues("ship", GridCell::Center), &g);
    assert_eq!(texts(&out), vec!["all ships in the image"]);
    let out = generate_rule_expressions(
        &target(TargetKind::SemanticRegion, "agricultural land", 0),
        &cues("agricultural land", GridCell::Center),
        &g,
    );
    assert_eq!(texts(&out), vec!["all agricultural land in the image"]);
    let out = generate_rule_expressions(&target(TargetKind::Instance, "plane", 0), &cues("plane", GridCell::TopRight), &g);
    assert_eq!(texts(&out), vec!["the plane in the top-right"]);
}

#[test]
fn dedup_examples() {
    let e = |t: &str, id: &str| Expression::rule(t.into(), id);
    let out = dedupe_image(vec![e("the plane in the top-left", "a"), e("the plane in the top-left", "b")]);
    assert!(out.is_empty());

    let kept = dedupe_image(vec![e("x", "a"), e("y", "b")]);
    assert_eq!(kept.len(), 2);

    let out = dedupe_image(vec![
        e("shared", "a"),
        e("only a", "a"),
        e("shared", "b"),
        e("only b", "b"),
        e("shared", "c"),
        e("only c", "c"),
    ]);
    assert_eq!(texts(&out), vec!["only a", "only b", "only c"]);
}

const DIRECTION_WORDS: [&str; 8] = ["right", "top-right", "top", "top-left", "left", "bottom-left", "bottom", "bottom-right"];

/// Expands the cue lattice by plain string formatting.
fn brute_expand(category: &str, grid: &str, color: Option<&str>, relations: &[(usize, &str)], flags: &[&str]) -> Vec<String> {
    let colors: Vec<String> = std::iter::once(String::new()).chain(color.map(|c| format!("{c} "))).collect();
    let mut uniq: Vec<(usize, &str)> = Vec::new();
    for r in relations {
        if !uniq.contains(r) {
            uniq.push(*r);
        }
    }
    let mut out = Vec::new();
    for c in &colors {
        out.push(format!("the {c}{category} in the {grid}"));
    }
    for (d, n) in &uniq {
        for c in &colors {
            out.push(format!("the {c}{category} in the {grid} to the {} of a {n}", DIRECTION_WORDS[*d]));
        }
    }
    for f in flags {
        for c in &colors {
            out.push(format!("the {f} {c}{category}"));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn enumeration_count_law(
        cat in prop::sample::select(vec!["plane", "ship", "storage tank"]),
        grid in 0usize..9,
        color in prop::option::of(0usize..8),
        rels in prop::collection::vec((0usize..8, prop::sample::select(vec!["plane", "ship", "harbor"])), 0..5),
        flags in prop::sample::subsequence(vec![0usize, 1, 2, 3], 0..=4),
    ) {
        let colors = [ColorLabel::Light, ColorLabel::Dark, ColorLabel::Red, ColorLabel::Orange, ColorLabel::Yellow, ColorLabel::Green, ColorLabel::Blue, ColorLabel::Purple];
        let cells = [GridCell::TopLeft, GridCell::TopCenter, GridCell::TopRight, GridCell::CenterLeft, GridCell::Center, GridCell::CenterRight, GridCell::BottomLeft, GridCell::BottomCenter, GridCell::BottomRight];
        let all_flags = [ExtremeFlag::Topmost, ExtremeFlag::Bottommost, ExtremeFlag::Leftmost, ExtremeFlag::Rightmost];
        let cues = CueSet {
            category_name: cat.into(),
            grid_cell: cells[grid],
            extreme_flags: flags.iter().map(|&f| all_flags[f]).collect(),
            color: color.map(|c| colors[c]),
            relations: rels.iter().map(|&(d, n)| relation(Direction::ALL[d], n)).collect(),
        };
        let out = generate_rule_expressions(&target(TargetKind::Instance, cat, 0), &cues, &Grammar::builtin());

        let flag_words: Vec<&str> = flags.iter().map(|&f| all_flags[f].as_str()).collect();
        let expected = brute_expand(cat, cells[grid].as_str(), color.map(|c| colors[c].as_str()), &rels, &flag_words);
        let produced: Vec<String> = out.iter().map(|e| e.text.clone()).collect();
        prop_assert_eq!(&produced, &expected);

        let distinct: BTreeSet<_> = rels.iter().collect();
        let has_color = color.is_some() as usize;
        prop_assert_eq!(out.len(), (1 + has_color) * (1 + distinct.len()) + flags.len() * (1 + has_color));
    }

    #[test]
    fn dedup_matches_multiset_oracle(
        items in prop::collection::vec((0usize..10, 0usize..6), 0..40),
    ) {
        let input: Vec<Expression> = items.iter().map(|&(t, s)| Expression::rule(format!("text {s}"), &format!("t{t}"))).collect();
        let out = dedupe_image(input.clone());

        let mut owners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in &input {
            owners.entry(&e.text).or_default().insert(&e.target_id);
        }
        let expected: BTreeSet<(String, String)> = input
            .iter()
            .filter(|e| owners[e.text.as_str()].len() == 1)
            .map(|e| (e.text.clone(), e.target_id.clone()))
            .collect();
        let got: BTreeSet<(String, String)> = out.iter().map(|e| (e.text.clone(), e.target_id.clone())).collect();
        prop_assert_eq!(got.len(), out.len());
        prop_assert_eq!(got, expected);
    }
}
