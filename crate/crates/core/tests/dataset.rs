use std::collections::BTreeMap;

use forge_core::dataset::{
    assign_splits, compute_stats, load_manifest, write_manifest, DatasetManifest, ExpressionRecord, ImageRecord,
    RleMask, Split, TargetRecord,
};
use forge_core::expressions::ExpressionSource;
use forge_core::targets::TargetKind;
use forge_core::Mask;
use proptest::prelude::*;

fn image(id: &str, split: Split) -> ImageRecord {
    ImageRecord {
        id: id.into(),
        file: format!("images/{id}.png").into(),
        split,
        source_dataset: "isaid".into(),
        source_id: id.into(),
        origin: [0, 0],
        filter: None,
    }
}

fn target(id: &str, image: &str, kind: TargetKind, category: &str) -> TargetRecord {
    let mask = Mask::rect(8, 8, 1, 1, 2, 2);
    TargetRecord {
        id: id.into(),
        image_id: image.into(),
        kind,
        category: category.into(),
        bbox: mask.bbox().unwrap(),
        mask: RleMask::encode(&mask),
        members: vec![],
    }
}

fn expression(id: &str, target: &str, text: &str, source: ExpressionSource) -> ExpressionRecord {
    ExpressionRecord {
        id: id.into(),
        target_id: target.into(),
        text: text.into(),
        source,
        parent: None,
    }
}

fn three_expression_manifest() -> DatasetManifest {
    let mut m = DatasetManifest::new();
    m.images = vec![image("a", Split::Train), image("b", Split::Test)];
    m.targets = vec![
        target("a-t0", "a", TargetKind::Instance, "plane"),
        target("b-t0", "b", TargetKind::SemanticRegion, "forest"),
    ];
    m.expressions = vec![
        expression("a-t0-e0", "a-t0", "the plane in the center", ExpressionSource::Rule),
        expression("a-t0-e1", "a-t0", "the aircraft in the middle", ExpressionSource::LlmLanguage),
        expression("b-t0-e0", "b-t0", "all forest in the image", ExpressionSource::Rule),
    ];
    m
}

#[test]
fn rle_examples() {
    assert_eq!(RleMask::encode(&Mask::new(2, 2)).counts, vec![4]);
    assert_eq!(RleMask::encode(&Mask::rect(2, 2, 0, 0, 2, 2)).counts, vec![0, 4]);
    assert_eq!(RleMask::encode(&Mask::rect(2, 2, 0, 0, 1, 1)).counts, vec![0, 1, 3]);
    let bad = RleMask { size: [2, 2], counts: vec![1, 1] };
    assert!(bad.decode().is_err());
}

#[test]
fn stats_recount() {
    let m = three_expression_manifest();
    let s = compute_stats(&m).unwrap();
    // independent recount
    let total = m.expressions.len() as u64;
    assert_eq!(s.total_expressions.total, total);
    assert_eq!(total, 3);
    assert_eq!(s.rule_expressions.total, 2);
    assert_eq!(s.llm_language_variations.total, 1);
    assert_eq!(s.instance_expressions.total, 2);
    assert_eq!(s.semantic_expressions.total, 1);
    assert_eq!(s.total_expressions.train, 2);
    assert_eq!(s.total_expressions.test, 1);
    assert!(s.double_entry_holds());
    assert_eq!(s.word_frequencies[0], ("the".to_string(), 5));

    let empty = compute_stats(&DatasetManifest::new()).unwrap();
    assert_eq!(empty.total_expressions.total, 0);
    assert!(empty.double_entry_holds());
}

#[test]
fn dangling_references_are_named() {
    let mut m = three_expression_manifest();
    m.expressions.push(expression("x", "ghost", "nothing", ExpressionSource::Rule));
    let err = compute_stats(&m).unwrap_err().to_string();
    assert!(err.contains("ghost"), "{err}");

    let mut m = three_expression_manifest();
    m.targets.push(target("lonely", "a", TargetKind::Instance, "ship"));
    assert!(m.validate().is_err());
}

#[test]
fn manifest_round_trip_through_shards() {
    let dir = tempfile::tempdir().unwrap();
    let m = three_expression_manifest();
    let index = write_manifest(dir.path(), &m).unwrap();
    assert_eq!(load_manifest(&index).unwrap(), m);
    let first = std::fs::read(&index).unwrap();
    write_manifest(dir.path(), &m).unwrap();
    assert_eq!(std::fs::read(&index).unwrap(), first);
}

#[test]
fn splits_are_seeded_and_per_source() {
    let ids: Vec<String> = (0..200).map(|i| format!("src{i:03}")).collect();
    let a = assign_splits(&ids, 0.25, 9).unwrap();
    assert_eq!(a, assign_splits(&ids, 0.25, 9).unwrap());
    assert_eq!(a.values().filter(|s| **s == Split::Test).count(), 50);
    assert_ne!(a, assign_splits(&ids, 0.25, 10).unwrap());
    assert!(assign_splits(&ids, 0.0, 9).is_err());
    assert!(assign_splits(&ids, 1.0, 9).is_err());
}

fn mask_strategy() -> impl Strategy<Value = Mask> {
    (1u32..=480, 1u32..=480, any::<u64>(), 0u32..4).prop_map(|(w, h, seed, style)| {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        match style {
            0 => Mask::from_fn(w, h, |_, _| next() % 2 == 0),
            1 => {
                let (x0, y0) = ((next() % w as u64) as u32, (next() % h as u64) as u32);
                Mask::rect(w, h, x0, y0, w - x0, h - y0)
            }
            2 => Mask::new(w, h),
            _ => Mask::from_fn(w, h, |x, y| (x / 7 + y / 5) % 3 == 0),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rle_round_trip(mask in mask_strategy()) {
        let rle = RleMask::encode(&mask);
        prop_assert_eq!(rle.counts.iter().map(|&c| c as u64).sum::<u64>(), mask.width() as u64 * mask.height() as u64);
        prop_assert_eq!(rle.area(), mask.area());
        prop_assert_eq!(&rle.decode().unwrap(), &mask);
    }

    #[test]
    fn stats_double_entry_on_random_manifests(
        rows in prop::collection::vec((0usize..4, any::<bool>(), 0u8..3, 1usize..4), 1..30),
    ) {
        let kinds = [TargetKind::Instance, TargetKind::Cluster, TargetKind::ClassGroup, TargetKind::SemanticRegion];
        let sources = [ExpressionSource::Rule, ExpressionSource::LlmLanguage, ExpressionSource::LlmVisual];
        let mut m = DatasetManifest::new();
        let mut by_source: BTreeMap<u8, u64> = BTreeMap::new();
        for (i, &(kind, test, source, n)) in rows.iter().enumerate() {
            let img = format!("i{i}");
            m.images.push(image(&img, if test { Split::Test } else { Split::Train }));
            let tid = format!("{img}-t0");
            m.targets.push(target(&tid, &img, kinds[kind], "thing"));
            for k in 0..n {
                m.expressions.push(expression(&format!("{tid}-e{k}"), &tid, "thing", sources[source as usize]));
                *by_source.entry(source).or_default() += 1;
            }
        }
        let s = compute_stats(&m).unwrap();
        prop_assert!(s.double_entry_holds());
        prop_assert_eq!(s.total_expressions.total, m.expressions.len() as u64);
        prop_assert_eq!(s.rule_expressions.total, by_source.get(&0).copied().unwrap_or(0));
    }
}
