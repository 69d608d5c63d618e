use std::collections::{BTreeSet, VecDeque};

use forge_core::ingest::{
    extract_pseudo_instances, resize_nearest_labels, resize_semantic_image, tile_instance_image, tile_offsets,
    Annotations, Connectivity, Legend, SemanticLayer, SourceImage, SourceInstance, SourceManifest, Tile, TilingParams,
};
use forge_core::synthetic::{write_corpus, CorpusSpec};
use forge_core::Mask;
use image::{GrayImage, Luma, RgbImage};
use proptest::prelude::*;

fn legend() -> Legend {
    Legend(
        [(1, "forest"), (2, "water"), (3, "building"), (4, "agricultural land")]
            .into_iter()
            .map(|(k, v)| (k, v.to_string()))
            .collect(),
    )
}

fn semantic_tile(raster: GrayImage) -> Tile {
    let (w, h) = raster.dimensions();
    Tile {
        id: "t".into(),
        source_id: "s".into(),
        source_dataset: "loveda".into(),
        origin: (0, 0),
        pixels: RgbImage::new(w, h),
        instances: Vec::new(),
        semantic: Some(SemanticLayer { raster, legend: legend() }),
    }
}

fn flood_fill_components(mask: &Mask) -> Vec<BTreeSet<(u32, u32)>> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; (w * h) as usize];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[(y * w + x) as usize] {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = VecDeque::from([(x, y)]);
            seen[(y * w + x) as usize] = true;
            while let Some((cx, cy)) = queue.pop_front() {
                comp.insert((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as u32, ny as u32);
                        if mask.get(nx, ny) && !seen[(ny * w + nx) as usize] {
                            seen[(ny * w + nx) as usize] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

#[test]
fn offsets_from_the_module_examples() {
    assert_eq!(tile_offsets(1024, 480, 384), vec![0, 384, 544]);
    assert_eq!(tile_offsets(480, 480, 384), vec![0]);
    assert_eq!(tile_offsets(800, 480, 384), vec![0, 320]);
}

#[test]
fn checkerboard_resize_keeps_class_balance() {
    let board = GrayImage::from_fn(1024, 1024, |x, y| Luma([if (x / 16 + y / 16) % 2 == 0 { 1 } else { 2 }]));
    let src = SourceImage::new(
        "cb",
        "loveda",
        RgbImage::new(1024, 1024),
        Annotations::Labels { raster: board.clone(), legend: legend() },
    )
    .unwrap();
    let tile = resize_semantic_image(&src, 480).unwrap();
    let raster = &tile.semantic.as_ref().unwrap().raster;
    assert_eq!(raster.dimensions(), (480, 480));
    assert_eq!(tile.pixels.dimensions(), (480, 480));

    // independent nearest-neighbour oracle
    let scale = 1024.0 / 480.0;
    let mut ones = 0usize;
    for y in 0..480u32 {
        for x in 0..480u32 {
            let sx = ((x as f64 + 0.5) * scale).floor() as u32;
            let sy = ((y as f64 + 0.5) * scale).floor() as u32;
            let expect = board.get_pixel(sx.min(1023), sy.min(1023))[0];
            assert_eq!(raster.get_pixel(x, y)[0], expect);
            ones += (expect == 1) as usize;
        }
    }
    let share = ones as f64 / (480.0 * 480.0);
    assert!((share - 0.5).abs() <= 0.02, "share {share}");
}

#[test]
fn uniform_raster_stays_uniform() {
    let raster = GrayImage::from_pixel(1024, 1024, Luma([4]));
    let out = resize_nearest_labels(&raster, 480, 480);
    assert!(out.pixels().all(|p| p[0] == 4));
}

#[test]
fn mismatched_raster_is_rejected() {
    let src = SourceImage {
        id: "bad".into(),
        dataset: "loveda".into(),
        pixels: RgbImage::new(1024, 1024),
        annotations: Annotations::Labels {
            raster: GrayImage::new(512, 512),
            legend: legend(),
        },
    };
    assert!(resize_semantic_image(&src, 480).is_err());
}

#[test]
fn building_blobs_match_flood_fill() {
    let raster = GrayImage::from_fn(480, 480, |x, y| {
        let a = (10..30).contains(&x) && (10..35).contains(&y);
        let b = (200..225).contains(&x) && (300..320).contains(&y);
        Luma([if a || b { 3 } else { 1 }])
    });
    let tile = semantic_tile(raster);
    let promote: BTreeSet<String> = ["building".into(), "water".into()].into();
    let found = extract_pseudo_instances(&tile, &promote, 100, Connectivity::Eight);
    assert_eq!(found.len(), 2);
    assert!(found.iter().all(|p| p.area == 500));

    let oracle = flood_fill_components(&tile.semantic.as_ref().unwrap().class_mask(3));
    let got: Vec<BTreeSet<(u32, u32)>> = found.iter().map(|p| p.mask.pixels().collect()).collect();
    assert_eq!(got, oracle);
}

#[test]
fn no_promoted_pixels_means_no_pseudo_instances() {
    let tile = semantic_tile(GrayImage::from_pixel(480, 480, Luma([1])));
    let promote: BTreeSet<String> = ["building".into(), "water".into()].into();
    assert!(extract_pseudo_instances(&tile, &promote, 100, Connectivity::Eight).is_empty());
}

#[test]
fn synthetic_corpus_loads_and_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_corpus(dir.path(), &CorpusSpec::default()).unwrap();
    let manifest = SourceManifest::load(&path).unwrap();
    assert_eq!(manifest.sources.len(), 4);
    let params = TilingParams::default();
    for entry in &manifest.sources {
        let src = manifest.load_source(entry).unwrap();
        match &src.annotations {
            Annotations::Instances(list) => {
                assert!(!list.is_empty());
                let tiles = tile_instance_image(&src, &params).unwrap();
                assert!(!tiles.is_empty());
                for t in &tiles {
                    assert_eq!(t.pixels.dimensions(), (480, 480));
                    assert!(t.instances.iter().all(|i| !i.mask.is_empty()));
                    assert!(t.origin.0 + 480 <= src.width().max(480));
                    assert!(t.origin.1 + 480 <= src.height().max(480));
                }
            }
            Annotations::Labels { .. } => {
                let tile = resize_semantic_image(&src, 480).unwrap();
                assert_eq!(tile.pixels.dimensions(), (480, 480));
            }
        }
    }
}

fn blob_strategy(w: u32, h: u32) -> impl Strategy<Value = (u32, u32, u32, u32)> {
    (0..w - 1, 0..h - 1).prop_flat_map(move |(x, y)| (Just(x), Just(y), 1..=(w - x).min(200), 1..=(h - y).min(200)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn offsets_cover_every_axis(dim in 480u32..5000, stride in 64u32..=480) {
        let offs = tile_offsets(dim, 480, stride);
        prop_assert_eq!(offs[0], 0);
        prop_assert_eq!(*offs.last().unwrap() + 480, dim);
        for w in offs.windows(2) {
            prop_assert!(w[1] > w[0] && w[1] - w[0] <= stride);
        }
    }

    #[test]
    fn clipped_masks_are_conserved(
        w in 480u32..1100,
        h in 480u32..1100,
        blobs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 1u32..200, 1u32..200), 1..6),
    ) {
        let instances: Vec<SourceInstance> = blobs
            .iter()
            .enumerate()
            .map(|(i, &(fx, fy, bw, bh))| {
                let bw = bw.min(w);
                let bh = bh.min(h);
                let x = ((w - bw) as f64 * fx) as u32;
                let y = ((h - bh) as f64 * fy) as u32;
                SourceInstance {
                    id: i as u64 + 1,
                    category: "ship".into(),
                    origin: (x, y),
                    mask: Mask::from_fn(bw, bh, |a, b| (a + b) % 3 != 0),
                }
            })
            .collect();
        let src = SourceImage::new("p", "isaid", RgbImage::new(w, h), Annotations::Instances(instances.clone())).unwrap();
        let tiles = tile_instance_image(&src, &TilingParams::default()).unwrap();
        for inst in &instances {
            let mut total = 0u64;
            let mut best = 0u64;
            for t in &tiles {
                let (ox, oy) = t.origin;
                // unclipped mask restricted to the window
                let window = Mask::from_fn(480, 480, |x, y| {
                    let (sx, sy) = (ox + x, oy + y);
                    sx >= inst.origin.0 && sy >= inst.origin.1
                        && sx - inst.origin.0 < inst.mask.width()
                        && sy - inst.origin.1 < inst.mask.height()
                        && inst.mask.get(sx - inst.origin.0, sy - inst.origin.1)
                });
                if let Some(c) = t.instances.iter().find(|a| a.id == inst.id) {
                    prop_assert_eq!(&c.mask, &window);
                    prop_assert!(c.mask.area() as f64 >= 0.2 * inst.area() as f64);
                    total += c.mask.area();
                    best = best.max(c.mask.area());
                }
            }
            prop_assert!(total >= best);
        }
    }

    #[test]
    fn nearest_resize_never_invents_classes(
        size in 16u32..200,
        classes in prop::collection::btree_set(0u8..12, 1..4),
        seed in any::<u64>(),
    ) {
        let list: Vec<u8> = classes.iter().copied().collect();
        let raster = GrayImage::from_fn(size, size, |x, y| {
            let k = (x as u64 * 31 + y as u64 * 17 + seed) % list.len() as u64;
            Luma([list[k as usize]])
        });
        let out = resize_nearest_labels(&raster, 48, 48);
        for p in out.pixels() {
            prop_assert!(classes.contains(&p[0]));
        }
    }

    #[test]
    fn components_match_flood_fill_and_are_idempotent(
        blobs in prop::collection::vec(blob_strategy(64, 64), 0..6),
    ) {
        let raster = GrayImage::from_fn(64, 64, |x, y| {
            let hit = blobs.iter().any(|&(bx, by, bw, bh)| x >= bx && x < bx + bw.min(20) && y >= by && y < by + bh.min(20));
            Luma([if hit { 3 } else { 1 }])
        });
        let tile = semantic_tile(raster);
        let promote: BTreeSet<String> = ["building".into()].into();
        let found = extract_pseudo_instances(&tile, &promote, 1, Connectivity::Eight);
        let oracle = flood_fill_components(&tile.semantic.as_ref().unwrap().class_mask(3));
        let got: Vec<BTreeSet<(u32, u32)>> = found.iter().map(|p| p.mask.pixels().collect()).collect();
        prop_assert_eq!(&got, &oracle);

        for p in &found {
            let raster = GrayImage::from_fn(64, 64, |x, y| Luma([if p.mask.get(x, y) { 3 } else { 1 }]));
            let again = extract_pseudo_instances(&semantic_tile(raster), &promote, 1, Connectivity::Eight);
            prop_assert_eq!(again.len(), 1);
            prop_assert_eq!(&again[0].mask, &p.mask);
        }
    }
}
