//! Input manifest and COCO-style instance annotations.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};
use serde::{Deserialize, Serialize};

use super::source::{Annotations, Legend, SourceImage, SourceInstance};
use crate::dataset::RleMask;
use crate::{Error, Mask, Result};

/// One source image listed in the input manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceEntry {
    pub id: String,
    pub dataset: String,
    pub image: PathBuf,
    /// Image id inside the manifest's COCO annotation file.
    #[serde(default)]
    pub coco_image_id: Option<u64>,
    /// Per-pixel class-id raster (single-channel PNG).
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    #[serde(default = "default_version")]
    version: u32,
    #[serde(default)]
    coco: Option<PathBuf>,
    #[serde(default)]
    legend: BTreeMap<u8, String>,
    sources: Vec<SourceEntry>,
}

fn default_version() -> u32 {
    1
}

#[derive(Debug, Deserialize)]
struct CocoFile {
    #[serde(default)]
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Deserialize)]
struct CocoImage {
    id: u64,
    width: u32,
    height: u32,
}

#[derive(Debug, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

#[derive(Debug, Clone, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    segmentation: Segmentation,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    Rle { size: [u32; 2], counts: RleCounts },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RleCounts {
    Plain(Vec<u32>),
    Compressed(String),
}

/// Parsed input manifest with its COCO index.
#[derive(Debug)]
pub struct SourceManifest {
    base: PathBuf,
    pub legend: Legend,
    pub sources: Vec<SourceEntry>,
    annotations: HashMap<u64, Vec<CocoAnnotation>>,
    image_sizes: HashMap<u64, (u32, u32)>,
    categories: HashMap<u64, String>,
}

/// `Large_Vehicle` → `large vehicle`.
fn display_name(raw: &str) -> String {
    raw.replace(['_', '-'], " ").to_lowercase()
}

impl SourceManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let file: ManifestFile = serde_json::from_str(&text).map_err(Error::json(path))?;
        if file.version != 1 {
            return Err(Error::Invalid(format!("unsupported source manifest version {}", file.version)));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut manifest = SourceManifest {
            base,
            legend: Legend(file.legend.into_iter().map(|(k, v)| (k, display_name(&v))).collect()),
            sources: file.sources,
            annotations: HashMap::new(),
            image_sizes: HashMap::new(),
            categories: HashMap::new(),
        };
        if let Some(coco) = file.coco {
            let coco_path = manifest.base.join(coco);
            let text = std::fs::read_to_string(&coco_path).map_err(Error::io(&coco_path))?;
            let coco: CocoFile = serde_json::from_str(&text).map_err(Error::json(&coco_path))?;
            manifest.categories = coco.categories.into_iter().map(|c| (c.id, display_name(&c.name))).collect();
            manifest.image_sizes = coco.images.into_iter().map(|i| (i.id, (i.width, i.height))).collect();
            for ann in coco.annotations {
                manifest.annotations.entry(ann.image_id).or_default().push(ann);
            }
            for anns in manifest.annotations.values_mut() {
                anns.sort_by_key(|a| a.id);
            }
        }
        Ok(manifest)
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.base.join(rel)
    }

    /// Decodes the source image and its annotations.
    pub fn load_source(&self, entry: &SourceEntry) -> Result<SourceImage> {
        let image_path = self.resolve(&entry.image);
        let pixels = match image::open(&image_path).map_err(Error::image(&image_path))? {
            DynamicImage::ImageRgb8(rgb) => rgb,
            _ => return Err(Error::NotRgb(entry.id.clone())),
        };
        let (w, h) = pixels.dimensions();

        let annotations = if let Some(labels) = &entry.labels {
            let label_path = self.resolve(labels);
            let raster: GrayImage = match image::open(&label_path).map_err(Error::image(&label_path))? {
                DynamicImage::ImageLuma8(g) => g,
                other => other.to_luma8(),
            };
            Annotations::Labels {
                raster,
                legend: self.legend.clone(),
            }
        } else {
            let image_id = entry
                .coco_image_id
                .ok_or_else(|| Error::Invalid(format!("source {} has neither labels nor a COCO image id", entry.id)))?;
            if let Some(&(cw, ch)) = self.image_sizes.get(&image_id) {
                if (cw, ch) != (w, h) {
                    return Err(Error::DimensionMismatch {
                        expected: (cw, ch),
                        actual: (w, h),
                    });
                }
            }
            let mut instances = Vec::new();
            for ann in self.annotations.get(&image_id).map(Vec::as_slice).unwrap_or_default() {
                let category = self
                    .categories
                    .get(&ann.category_id)
                    .cloned()
                    .ok_or_else(|| Error::DanglingReference(format!("annotation {} → category {}", ann.id, ann.category_id)))?;
                let full = match &ann.segmentation {
                    Segmentation::Polygons(polys) => rasterize_polygons(polys, w, h),
                    Segmentation::Rle { size, counts } => {
                        let rle = match counts {
                            RleCounts::Plain(c) => RleMask { size: *size, counts: c.clone() },
                            RleCounts::Compressed(s) => RleMask::from_coco_string(s, size[0], size[1])?,
                        };
                        let m = rle.decode()?;
                        if m.dims() != (w, h) {
                            return Err(Error::DimensionMismatch {
                                expected: (w, h),
                                actual: m.dims(),
                            });
                        }
                        m
                    }
                };
                let Some(b) = full.bbox() else { continue };
                instances.push(SourceInstance {
                    id: ann.id,
                    category,
                    origin: (b.x0, b.y0),
                    mask: full.crop(b.x0, b.y0, b.width(), b.height()),
                });
            }
            Annotations::Instances(instances)
        };
        SourceImage::new(entry.id.clone(), entry.dataset.clone(), pixels, annotations)
    }
}

/// Union of even-odd filled COCO polygons (`[x0, y0, x1, y1, …]`) sampled at pixel
/// centers.
pub fn rasterize_polygons(polygons: &[Vec<f64>], width: u32, height: u32) -> Mask {
    let mut mask = Mask::new(width, height);
    for poly in polygons {
        let pts: Vec<(f64, f64)> = poly.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        if pts.len() < 3 {
            continue;
        }
        let mut crossings = Vec::new();
        for y in 0..height {
            let cy = y as f64 + 0.5;
            crossings.clear();
            for i in 0..pts.len() {
                let (x0, y0) = pts[i];
                let (x1, y1) = pts[(i + 1) % pts.len()];
                if (y0 <= cy) != (y1 <= cy) {
                    crossings.push(x0 + (cy - y0) / (y1 - y0) * (x1 - x0));
                }
            }
            crossings.sort_by(f64::total_cmp);
            for pair in crossings.chunks_exact(2) {
                // pixel centers x + 0.5 in [a, b)
                let start = (pair[0] - 0.5).ceil().max(0.0) as i64;
                let end = ((pair[1] - 0.5).ceil() as i64).min(width as i64);
                for x in start..end {
                    let x = x as u32;
                    mask.set(x, y, true);
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_polygon_fills_pixels() {
        let m = rasterize_polygons(&[vec![2.0, 2.0, 6.0, 2.0, 6.0, 5.0, 2.0, 5.0]], 10, 10);
        assert_eq!(m, Mask::rect(10, 10, 2, 2, 4, 3));
    }

    #[test]
    fn triangle_area_is_close() {
        let m = rasterize_polygons(&[vec![0.0, 0.0, 100.0, 0.0, 0.0, 100.0]], 100, 100);
        let area = m.area() as f64;
        assert!((area - 5000.0).abs() < 100.0, "{area}");
    }

    #[test]
    fn display_names() {
        assert_eq!(display_name("Large_Vehicle"), "large vehicle");
        assert_eq!(display_name("plane"), "plane");
    }
}
