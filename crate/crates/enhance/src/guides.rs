//! Guide images shown to the model next to the rule expressions.

use forge_core::targets::{Target, TargetKind};
use forge_core::BBox;
use image::{Rgb, RgbImage};

pub const OUTLINE_WIDTH: u32 = 3;
pub const CROP_SCALE: f64 = 1.5;
pub const OVERLAY_ALPHA: f64 = 0.4;
const RED: Rgb<u8> = Rgb([255, 0, 0]);

#[derive(Debug, Clone, PartialEq)]
pub enum GuidePair {
    /// Tile with a red box around the target, and a close-up crop.
    Boxed { annotated: RgbImage, crop: RgbImage },
    /// Tile with a translucent red mask overlay, and the clean tile.
    Overlay { overlay: RgbImage, clean: RgbImage },
}

impl GuidePair {
    pub fn images(&self) -> [&RgbImage; 2] {
        match self {
            GuidePair::Boxed { annotated, crop } => [annotated, crop],
            GuidePair::Overlay { overlay, clean } => [overlay, clean],
        }
    }
}

/// Crop window `(x, y, w, h)`: the bbox scaled by `scale` about its center
/// in continuous pixel coordinates, clamped to the tile.
pub fn crop_window(bbox: &BBox, scale: f64, tile_w: u32, tile_h: u32) -> (u32, u32, u32, u32) {
    let (cx, cy) = ((bbox.x0 + bbox.x1 + 1) as f64 / 2.0, (bbox.y0 + bbox.y1 + 1) as f64 / 2.0);
    let hw = bbox.width() as f64 * scale / 2.0;
    let hh = bbox.height() as f64 * scale / 2.0;
    let x0 = (cx - hw).round().max(0.0) as u32;
    let y0 = (cy - hh).round().max(0.0) as u32;
    let x1 = ((cx + hw).round() as u32).min(tile_w);
    let y1 = ((cy + hh).round() as u32).min(tile_h);
    (x0, y0, x1 - x0, y1 - y0)
}

/// Draws a `width`-pixel outline just outside the bbox, clipped to the image.
pub fn draw_box(img: &mut RgbImage, bbox: &BBox, width: u32) {
    let (w, h) = img.dimensions();
    let (ox0, oy0) = (bbox.x0 as i64 - width as i64, bbox.y0 as i64 - width as i64);
    let (ox1, oy1) = (bbox.x1 as i64 + width as i64, bbox.y1 as i64 + width as i64);
    for y in oy0.max(0)..=oy1.min(h as i64 - 1) {
        for x in ox0.max(0)..=ox1.min(w as i64 - 1) {
            let inside = x >= bbox.x0 as i64 && x <= bbox.x1 as i64 && y >= bbox.y0 as i64 && y <= bbox.y1 as i64;
            if !inside {
                img.put_pixel(x as u32, y as u32, RED);
            }
        }
    }
}

pub fn render_guides(tile: &RgbImage, target: &Target) -> GuidePair {
    match target.kind {
        TargetKind::SemanticRegion => {
            let mut overlay = tile.clone();
            for (x, y) in target.mask.pixels() {
                let p = overlay.get_pixel_mut(x, y);
                for (c, r) in p.0.iter_mut().zip(RED.0) {
                    *c = ((1.0 - OVERLAY_ALPHA) * *c as f64 + OVERLAY_ALPHA * r as f64).round() as u8;
                }
            }
            GuidePair::Overlay {
                overlay,
                clean: tile.clone(),
            }
        }
        _ => {
            let (x, y, w, h) = crop_window(&target.bbox, CROP_SCALE, tile.width(), tile.height());
            let crop = image::imageops::crop_imm(tile, x, y, w, h).to_image();
            let mut annotated = tile.clone();
            draw_box(&mut annotated, &target.bbox, OUTLINE_WIDTH);
            GuidePair::Boxed { annotated, crop }
        }
    }
}
