//! Deterministic synthetic source corpus: instance-annotated scenes with
//! COCO polygons and label-raster scenes with a class legend.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSpec {
    pub instance_images: usize,
    pub semantic_images: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            instance_images: 2,
            semantic_images: 2,
            seed: 7,
        }
    }
}

const CATEGORIES: [(u64, &str); 5] = [
    (1, "plane"),
    (2, "ship"),
    (3, "small_vehicle"),
    (4, "large_vehicle"),
    (5, "storage_tank"),
];

pub const LEGEND: [(u8, &str); 7] = [
    (1, "background"),
    (2, "building"),
    (3, "road"),
    (4, "water"),
    (5, "barren"),
    (6, "forest"),
    (7, "agricultural land"),
];

const CLASS_COLORS: [[u8; 3]; 8] = [
    [0, 0, 0],
    [128, 128, 120],
    [170, 90, 70],
    [110, 110, 110],
    [40, 70, 140],
    [160, 140, 110],
    [30, 90, 40],
    [150, 170, 80],
];

struct Placed {
    category: u64,
    polygon: Vec<f64>,
    color: [u8; 3],
}

fn rect_polygon(x: f64, y: f64, w: f64, h: f64) -> Vec<f64> {
    vec![x, y, x + w, y, x + w, y + h, x, y + h]
}

fn octagon(cx: f64, cy: f64, r: f64) -> Vec<f64> {
    (0..8)
        .flat_map(|k| {
            let a = std::f64::consts::PI / 8.0 + k as f64 * std::f64::consts::PI / 4.0;
            [cx + r * a.cos(), cy + r * a.sin()]
        })
        .collect()
}

/// Periodic texture; compresses well as PNG.
fn shade(c: [u8; 3], x: u32, y: u32, amount: i32) -> [u8; 3] {
    let t = ((x * 5) % 9) as i32 - 4;
    let u = ((y / 16) % 3) as i32 - 1;
    let d = (t * amount) / 4 + u;
    c.map(|v| (v as i32 + d).clamp(0, 255) as u8)
}

fn instance_scene(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Vec<Placed> {
    let mut out = Vec::new();
    let mut taken: Vec<(f64, f64, f64, f64)> = Vec::new();
    let free = |x: f64, y: f64, bw: f64, bh: f64, taken: &mut Vec<(f64, f64, f64, f64)>| {
        let ok = x >= 0.0
            && y >= 0.0
            && x + bw <= w as f64
            && y + bh <= h as f64
            && taken
                .iter()
                .all(|&(tx, ty, tw, th)| x + bw + 3.0 < tx || tx + tw + 3.0 < x || y + bh + 3.0 < ty || ty + th + 3.0 < y);
        if ok {
            taken.push((x, y, bw, bh));
        }
        ok
    };

    // vehicle rows: clusters of 3-5 with small gaps
    for _ in 0..(w * h / 250_000).max(2) {
        let n = rng.random_range(3..=5);
        let x0 = rng.random_range(0.0..(w as f64 - 200.0));
        let y0 = rng.random_range(0.0..(h as f64 - 40.0));
        let large = rng.random_bool(0.4);
        let (vw, vh, cat) = if large { (26.0, 11.0, 4) } else { (14.0, 8.0, 3) };
        let color = [[200, 40, 35], [40, 60, 190], [235, 235, 230], [25, 25, 28]][rng.random_range(0..4)];
        for k in 0..n {
            let x = x0 + k as f64 * (vw + 6.0);
            if free(x, y0, vw, vh, &mut taken) {
                out.push(Placed {
                    category: cat,
                    polygon: rect_polygon(x, y0, vw, vh),
                    color,
                });
            }
        }
    }
    // scattered singles
    for _ in 0..(w * h / 60_000).max(6) {
        let (cat, bw, bh, color) = match rng.random_range(0..4) {
            0 => (1, 44.0, 40.0, [238, 238, 240]),
            1 => (2, 34.0, 12.0, [30, 32, 40]),
            2 => (5, 26.0, 26.0, [225, 225, 215]),
            _ => (3, 14.0, 8.0, [220, 200, 30]),
        };
        let x = rng.random_range(0.0..(w as f64 - bw));
        let y = rng.random_range(0.0..(h as f64 - bh));
        if free(x, y, bw, bh, &mut taken) {
            let polygon = if cat == 5 {
                octagon(x + bw / 2.0, y + bh / 2.0, bw / 2.0)
            } else {
                rect_polygon(x, y, bw, bh)
            };
            out.push(Placed { category: cat, polygon, color });
        }
    }
    out
}

fn paint_background(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let base = [[120, 115, 105], [95, 110, 80], [130, 125, 120]][rng.random_range(0..3)];
    RgbImage::from_fn(w, h, |x, y| Rgb(shade(base, x, y, 12)))
}

fn write_png(img: &image::DynamicImage, path: &Path) -> Result<()> {
    img.save(path).map_err(Error::image(path))
}

/// Writes `sources.json`, `instances.json`, `images/` and `labels/` under
/// `dir`. Returns the path of the source manifest.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> Result<std::path::PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for sub in ["images", "labels"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(Error::io(&p))?;
    }
    let mut sources = Vec::new();
    let mut coco_images = Vec::new();
    let mut coco_annotations = Vec::new();
    let mut ann_id = 1u64;

    for i in 0..spec.instance_images {
        let (w, h) = [(1024, 1024), (800, 600), (1200, 900), (640, 480)][i % 4];
        let id = format!("inst{i:04}");
        let mut img = paint_background(&mut rng, w, h);
        let placed = instance_scene(&mut rng, w, h);
        for p in &placed {
            let mask = crate::ingest::rasterize_polygons(std::slice::from_ref(&p.polygon), w, h);
            for (x, y) in mask.pixels() {
                img.put_pixel(x, y, Rgb(shade(p.color, x, y, 6)));
            }
            coco_annotations.push(json!({
                "id": ann_id,
                "image_id": i as u64 + 1,
                "category_id": p.category,
                "segmentation": [p.polygon],
                "iscrowd": 0,
            }));
            ann_id += 1;
        }
        let rel = format!("images/{id}.png");
        write_png(&img.into(), &dir.join(&rel))?;
        coco_images.push(json!({"id": i as u64 + 1, "width": w, "height": h, "file_name": rel}));
        sources.push(json!({"id": id, "dataset": "isaid", "image": rel, "coco_image_id": i as u64 + 1}));
    }

    for i in 0..spec.semantic_images {
        let (w, h) = (1024u32, 1024u32);
        let id = format!("sem{i:04}");
        let split_x = rng.random_range(300..700);
        let forest_y = rng.random_range(500..800);
        let lake = (
            rng.random_range(150.0..850.0),
            rng.random_range(150.0..400.0),
            rng.random_range(60.0..120.0),
        );
        let road_y = rng.random_range(420..480);
        let houses: Vec<(u32, u32, u32)> = (0..rng.random_range(3..7))
            .map(|_| (rng.random_range(0..960), rng.random_range(0..960), rng.random_range(40..64)))
            .collect();
        let labels = GrayImage::from_fn(w, h, |x, y| {
            let (fx, fy) = (x as f64, y as f64);
            let class = if houses.iter().any(|&(hx, hy, s)| x >= hx && x < hx + s && y >= hy && y < hy + s) {
                2
            } else if (fx - lake.0).powi(2) + (fy - lake.1).powi(2) < lake.2 * lake.2 {
                4
            } else if y >= road_y && y < road_y + 24 {
                3
            } else if x < split_x {
                7
            } else if y >= forest_y {
                6
            } else if x > 980 && y < 40 {
                1
            } else {
                5
            };
            Luma([class])
        });
        let img = RgbImage::from_fn(w, h, |x, y| Rgb(shade(CLASS_COLORS[labels.get_pixel(x, y)[0] as usize], x, y, 10)));
        let rel_img = format!("images/{id}.png");
        let rel_lab = format!("labels/{id}.png");
        write_png(&img.into(), &dir.join(&rel_img))?;
        write_png(&labels.into(), &dir.join(&rel_lab))?;
        sources.push(json!({"id": id, "dataset": "loveda", "image": rel_img, "labels": rel_lab}));
    }

    let coco = json!({
        "images": coco_images,
        "annotations": coco_annotations,
        "categories": CATEGORIES.iter().map(|(id, name)| json!({"id": id, "name": name})).collect::<Vec<_>>(),
    });
    let coco_path = dir.join("instances.json");
    std::fs::write(&coco_path, serde_json::to_string_pretty(&coco).expect("json") + "\n").map_err(Error::io(&coco_path))?;

    let legend: serde_json::Map<String, serde_json::Value> =
        LEGEND.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let manifest = json!({
        "version": 1,
        "coco": "instances.json",
        "legend": legend,
        "sources": sources,
    });
    let path = dir.join("sources.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("json") + "\n").map_err(Error::io(&path))?;
    Ok(path)
}
