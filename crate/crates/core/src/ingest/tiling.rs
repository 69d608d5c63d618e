use image::RgbImage;

use super::source::{tile_id, Annotations, InstanceAnnotation, SourceImage, Tile};
use crate::{Error, Mask, Result, TILE_SIZE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TilingParams {
    pub window: u32,
    pub stride: u32,
    /// Instances keeping less than this fraction of their area inside a
    /// window are dropped from that tile.
    pub min_clip_fraction: f64,
}

impl Default for TilingParams {
    fn default() -> Self {
        Self {
            window: TILE_SIZE,
            stride: 384,
            min_clip_fraction: 0.2,
        }
    }
}

/// Window offsets along one axis: `0, stride, 2·stride, …` with the last
/// offset snapped to `dim − window` so the windows cover the axis.
pub fn tile_offsets(dim: u32, window: u32, stride: u32) -> Vec<u32> {
    assert!(stride > 0, "stride must be positive");
    if dim <= window {
        return vec![0];
    }
    let mut offsets = Vec::new();
    let mut o = 0;
    while o + window < dim {
        offsets.push(o);
        o += stride;
    }
    offsets.push(dim - window);
    offsets
}

/// Reflect index `i` into `[0, n)` without repeating the edge pixel.
fn reflect(i: u32, n: u32) -> u32 {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn reflect_pad(img: &RgbImage, min_w: u32, min_h: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    if w >= min_w && h >= min_h {
        return img.clone();
    }
    RgbImage::from_fn(w.max(min_w), h.max(min_h), |x, y| *img.get_pixel(reflect(x, w), reflect(y, h)))
}

/// Cuts an instance-annotated source into overlapping windows and keeps
/// the windows that contain at least one surviving clipped instance.
///
/// Sources smaller than the window are reflect-padded on the right and
/// bottom; padded pixels never belong to any instance.
pub fn tile_instance_image(img: &SourceImage, params: &TilingParams) -> Result<Vec<Tile>> {
    let Annotations::Instances(instances) = &img.annotations else {
        return Err(Error::Invalid(format!("source {} has no instance annotations", img.id)));
    };
    if params.window == 0 || params.stride == 0 {
        return Err(Error::InvalidParameter {
            name: "window/stride",
            reason: "must be positive".into(),
        });
    }
    if instances.is_empty() {
        return Ok(Vec::new());
    }

    let win = params.window;
    let pixels = reflect_pad(&img.pixels, win, win);
    let (w, h) = pixels.dimensions();
    let areas: Vec<u64> = instances.iter().map(|i| i.area()).collect();
    let bboxes: Vec<_> = instances
        .iter()
        .map(|i| {
            i.mask.bbox().map(|b| {
                (b.x0 + i.origin.0, b.y0 + i.origin.1, b.x1 + i.origin.0, b.y1 + i.origin.1)
            })
        })
        .collect();

    let mut tiles = Vec::new();
    for &oy in &tile_offsets(h, win, params.stride) {
        for &ox in &tile_offsets(w, win, params.stride) {
            let mut clipped = Vec::new();
            for ((inst, &area), bbox) in instances.iter().zip(&areas).zip(&bboxes) {
                let Some((bx0, by0, bx1, by1)) = *bbox else { continue };
                if bx1 < ox || by1 < oy || bx0 >= ox + win || by0 >= oy + win {
                    continue;
                }
                let mask = Mask::from_fn(win, win, |x, y| {
                    let (sx, sy) = (ox + x, oy + y);
                    let (lx, ly) = (sx.wrapping_sub(inst.origin.0), sy.wrapping_sub(inst.origin.1));
                    lx < inst.mask.width() && ly < inst.mask.height() && inst.mask.get(lx, ly)
                });
                let kept = mask.area();
                if kept == 0 || (kept as f64) < params.min_clip_fraction * area as f64 {
                    continue;
                }
                clipped.push(InstanceAnnotation {
                    id: inst.id,
                    category: inst.category.clone(),
                    mask,
                });
            }
            if clipped.is_empty() {
                continue;
            }
            clipped.sort_by_key(|a| a.id);
            let pixels = image::imageops::crop_imm(&pixels, ox, oy, win, win).to_image();
            tiles.push(Tile {
                id: tile_id(&img.id, (ox, oy)),
                source_id: img.id.clone(),
                source_dataset: img.dataset.clone(),
                origin: (ox, oy),
                pixels,
                instances: clipped,
                semantic: None,
            });
        }
    }
    Ok(tiles)
}
