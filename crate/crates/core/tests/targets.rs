use std::collections::BTreeSet;

use forge_core::ingest::{InstanceAnnotation, Tile};
use forge_core::targets::{
    build_targets, color_classify, dbscan, directional_relations, edge_distance, extract_cues, extreme_flags,
    grid_position, ColorLabel, ColorParams, CueParams, Direction, ExtremeFlag, GridCell, Landmark, TargetKind,
    TargetParams,
};
use forge_core::{BBox, Mask};
use image::{Rgb, RgbImage};
use proptest::prelude::*;

fn tile_with(boxes: &[(&str, u32, u32, u32, u32)]) -> Tile {
    Tile {
        id: "img_0_0".into(),
        source_id: "img".into(),
        source_dataset: "isaid".into(),
        origin: (0, 0),
        pixels: RgbImage::from_pixel(480, 480, Rgb([90, 100, 80])),
        instances: boxes
            .iter()
            .enumerate()
            .map(|(i, &(cat, x, y, w, h))| InstanceAnnotation {
                id: i as u64 + 1,
                category: cat.to_string(),
                mask: Mask::rect(480, 480, x, y, w, h),
            })
            .collect(),
        semantic: None,
    }
}

/// Minimum distance over every pair of boundary pixels, 0 when touching.
fn brute_edge_distance(a: &Mask, b: &Mask) -> f64 {
    let pa: Vec<_> = a.pixels().collect();
    let pb: Vec<_> = b.pixels().collect();
    if pa.iter().any(|p| b.get(p.0, p.1)) {
        return 0.0;
    }
    let edge = |m: &Mask, (x, y): (u32, u32)| {
        x == 0 || y == 0 || x + 1 == m.width() || y + 1 == m.height()
            || !m.get(x - 1, y) || !m.get(x + 1, y) || !m.get(x, y - 1) || !m.get(x, y + 1)
    };
    let mut best = f64::INFINITY;
    for &p in pa.iter().filter(|&&p| edge(a, p)) {
        for &q in pb.iter().filter(|&&q| edge(b, q)) {
            let dx = p.0 as f64 - q.0 as f64;
            let dy = p.1 as f64 - q.1 as f64;
            best = best.min((dx * dx + dy * dy).sqrt());
        }
    }
    if best <= std::f64::consts::SQRT_2 { 0.0 } else { best }
}

#[test]
fn edge_distance_examples() {
    let a = Mask::rect(20, 20, 0, 0, 1, 1);
    let b = Mask::rect(20, 20, 3, 4, 1, 1);
    assert_eq!(edge_distance(&a, &b).unwrap(), 5.0);

    let left = Mask::rect(64, 32, 0, 0, 10, 10);
    let right = Mask::rect(64, 32, 14, 0, 10, 10);
    assert_eq!(edge_distance(&left, &right).unwrap(), 5.0);
    assert_eq!(brute_edge_distance(&left, &right), 5.0);

    let over = Mask::rect(64, 32, 5, 5, 10, 10);
    assert_eq!(edge_distance(&left, &over).unwrap(), 0.0);
    assert_eq!(edge_distance(&left, &left).unwrap(), 0.0);
    assert!(edge_distance(&left, &Mask::new(64, 32)).is_err());
}

#[test]
fn three_close_boxes_form_one_cluster() {
    let tile = tile_with(&[
        ("plane", 100, 100, 10, 10),
        ("plane", 114, 100, 10, 10),
        ("plane", 128, 100, 10, 10),
    ]);
    let params = TargetParams { eps: 20.0, ..Default::default() };
    let targets = build_targets(&tile, &params);
    let kinds: Vec<TargetKind> = targets.iter().map(|t| t.kind).collect();
    assert_eq!(
        kinds,
        vec![TargetKind::Instance, TargetKind::Instance, TargetKind::Instance, TargetKind::Cluster, TargetKind::ClassGroup]
    );
    assert_eq!(targets[3].members.len(), 3);
    assert_eq!(targets[3].mask.area(), 300);
    assert_eq!(targets[3].bbox, BBox { x0: 100, y0: 100, x1: 137, y1: 109 });
}

#[test]
fn single_instance_has_no_collective_targets() {
    let targets = build_targets(&tile_with(&[("ship", 10, 10, 20, 8)]), &TargetParams::default());
    assert_eq!(targets.len(), 1);
    assert_eq!(targets[0].kind, TargetKind::Instance);
}

#[test]
fn oversized_cluster_is_discarded_but_group_kept() {
    let boxes: Vec<(&str, u32, u32, u32, u32)> = (0..9).map(|i| ("small vehicle", 20 + i * 14, 200, 10, 6)).collect();
    let targets = build_targets(&tile_with(&boxes), &TargetParams::default());
    assert_eq!(targets.iter().filter(|t| t.kind == TargetKind::Cluster).count(), 0);
    let groups: Vec<_> = targets.iter().filter(|t| t.kind == TargetKind::ClassGroup).collect();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].members.len(), 9);
}

#[test]
fn grid_examples() {
    let at = |cx: u32, cy: u32| grid_position(&BBox { x0: cx, y0: cy, x1: cx, y1: cy }, 480);
    assert_eq!(at(79, 79), GridCell::TopLeft);
    assert_eq!(at(240, 240), GridCell::Center);
    assert_eq!(at(470, 10), GridCell::TopRight);
    assert_eq!(at(159, 160), GridCell::CenterLeft);
    assert_eq!(at(320, 479), GridCell::BottomRight);
}

#[test]
fn extreme_flag_examples() {
    let flags = extreme_flags(&[(100.0, 100.0), (300.0, 300.0)]);
    let set = |v: &Vec<ExtremeFlag>| v.iter().copied().collect::<BTreeSet<_>>();
    assert_eq!(set(&flags[0]), [ExtremeFlag::Topmost, ExtremeFlag::Leftmost].into());
    assert_eq!(set(&flags[1]), [ExtremeFlag::Bottommost, ExtremeFlag::Rightmost].into());

    assert!(extreme_flags(&[(5.0, 5.0)])[0].is_empty());

    let tied = extreme_flags(&[(100.0, 50.0), (300.0, 50.0)]);
    for f in &tied {
        assert!(!f.contains(&ExtremeFlag::Topmost) && !f.contains(&ExtremeFlag::Bottommost));
    }
}

#[test]
fn color_examples() {
    let p = ColorParams::default();
    assert_eq!(color_classify(vec![[255, 0, 0]; 50], "plane", &p), Some(ColorLabel::Red));
    assert_eq!(color_classify(vec![[240, 240, 235]; 50], "plane", &p), Some(ColorLabel::Light));
    assert_eq!(color_classify(vec![[20, 20, 20]; 50], "ship", &p), Some(ColorLabel::Dark));
    let mixed: Vec<[u8; 3]> = (0..100).map(|i| if i % 2 == 0 { [255, 0, 0] } else { [0, 0, 255] }).collect();
    assert_eq!(color_classify(mixed, "plane", &p), None);
    assert_eq!(color_classify(vec![[255, 0, 0]; 50], "building", &p), None);
    assert_eq!(color_classify(vec![[240, 240, 235]; 50], "water", &p), None);
}

#[test]
fn relation_examples() {
    let lm = |x: f64, y: f64| Landmark { id: "n", center: (x, y), category: "plane" };
    let r = directional_relations((200.0, 100.0), &[lm(100.0, 100.0)], 200.0);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].direction, Direction::Right);
    let r = directional_relations((170.0, 30.0), &[lm(100.0, 100.0)], 200.0);
    assert_eq!(r[0].direction, Direction::TopRight);
    assert!(directional_relations((450.0, 450.0), &[lm(10.0, 10.0)], 200.0).is_empty());
}

#[test]
fn cues_follow_the_tile() {
    let mut tile = tile_with(&[("plane", 330, 40, 40, 40), ("plane", 250, 100, 40, 40), ("storage tank", 20, 400, 20, 20)]);
    for (x, y) in tile.instances[0].mask.pixels().collect::<Vec<_>>() {
        tile.pixels.put_pixel(x, y, Rgb([240, 240, 242]));
    }
    let targets = build_targets(&tile, &TargetParams::default());
    let cues = extract_cues(&tile, &targets, &CueParams::default());
    assert_eq!(cues.len(), targets.len());
    assert_eq!(cues[0].grid_cell, GridCell::TopRight);
    assert_eq!(cues[0].color, Some(ColorLabel::Light));
    assert!(cues[0].extreme_flags.contains(&ExtremeFlag::Topmost));
    assert!(cues[0].relations.iter().any(|r| r.direction == Direction::TopRight && r.neighbor_category == "plane"));
    // the tank is out of range of both planes
    assert!(cues[2].relations.is_empty());
    assert!(cues[2].extreme_flags.is_empty());
    for (t, c) in targets.iter().zip(&cues) {
        if t.kind != TargetKind::Instance {
            assert!(c.color.is_none() && c.relations.is_empty() && c.extreme_flags.is_empty());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn edge_distance_matches_brute_force(
        a in (0u32..30, 0u32..30, 1u32..8, 1u32..8),
        b in (0u32..30, 0u32..30, 1u32..8, 1u32..8),
    ) {
        let ma = Mask::rect(40, 40, a.0, a.1, a.2, a.3);
        let mb = Mask::rect(40, 40, b.0, b.1, b.2, b.3);
        let d = edge_distance(&ma, &mb).unwrap();
        prop_assert!((d - brute_edge_distance(&ma, &mb)).abs() < 1e-9);
        prop_assert_eq!(d, edge_distance(&mb, &ma).unwrap());
    }

    #[test]
    fn targets_satisfy_invariants(
        boxes in prop::collection::vec((0usize..3, 0u32..440, 0u32..440, 2u32..40, 2u32..40), 0..12),
    ) {
        let cats = ["plane", "ship", "small vehicle"];
        let spec: Vec<(&str, u32, u32, u32, u32)> = boxes.iter().map(|&(c, x, y, w, h)| (cats[c], x, y, w, h)).collect();
        let tile = tile_with(&spec);
        let targets = build_targets(&tile, &TargetParams::default());
        for t in &targets {
            prop_assert_eq!(Some(t.bbox), t.mask.bbox());
            match t.kind {
                TargetKind::Cluster => prop_assert!((2..=8).contains(&t.members.len())),
                TargetKind::ClassGroup => {
                    let n = targets.iter().filter(|o| o.kind == TargetKind::Instance && o.category == t.category).count();
                    prop_assert_eq!(t.members.len(), n);
                }
                _ => {}
            }
            if !t.members.is_empty() {
                let mut union = Mask::new(480, 480);
                for m in &t.members {
                    let member = targets.iter().find(|o| &o.id == m).unwrap();
                    union = union.union(&member.mask).unwrap();
                }
                prop_assert_eq!(&union, &t.mask);
            }
        }
    }

    #[test]
    fn dbscan_with_min_pts_two_is_connectivity(n in 1usize..12, edges in prop::collection::vec((0usize..12, 0usize..12), 0..20)) {
        let adj = |i: usize, j: usize| edges.iter().any(|&(a, b)| (a == i && b == j) || (a == j && b == i));
        let clusters = dbscan(n, 2, adj);
        for c in &clusters {
            prop_assert!(c.len() >= 2);
        }
        let covered: usize = clusters.iter().map(Vec::len).sum();
        let isolated = (0..n).filter(|&i| !(0..n).any(|j| j != i && adj(i, j))).count();
        prop_assert_eq!(covered + isolated, n);
    }
}
