use image::{imageops::FilterType, GrayImage, Luma};

use super::source::{tile_id, Annotations, SemanticLayer, SourceImage, Tile};
use crate::{Error, Result};

/// Nearest-neighbour resampling; never invents class ids.
pub fn resize_nearest_labels(labels: &GrayImage, width: u32, height: u32) -> GrayImage {
    let (sw, sh) = labels.dimensions();
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    GrayImage::from_fn(width, height, |x, y| {
        let px = (((x as f64 + 0.5) * sx) as u32).min(sw - 1);
        let py = (((y as f64 + 0.5) * sy) as u32).min(sh - 1);
        Luma([labels.get_pixel(px, py)[0]])
    })
}

/// Resizes a label-raster source to a single `size`×`size` tile: bilinear
/// for RGB, nearest-neighbour for labels.
pub fn resize_semantic_image(img: &SourceImage, size: u32) -> Result<Tile> {
    let Annotations::Labels { raster, legend } = &img.annotations else {
        return Err(Error::Invalid(format!("source {} has no label raster", img.id)));
    };
    if raster.dimensions() != img.pixels.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: img.pixels.dimensions(),
            actual: raster.dimensions(),
        });
    }
    let pixels = image::imageops::resize(&img.pixels, size, size, FilterType::Triangle);
    let raster = resize_nearest_labels(raster, size, size);
    Ok(Tile {
        id: tile_id(&img.id, (0, 0)),
        source_id: img.id.clone(),
        source_dataset: img.dataset.clone(),
        origin: (0, 0),
        pixels,
        instances: Vec::new(),
        semantic: Some(SemanticLayer {
            raster,
            legend: legend.clone(),
        }),
    })
}
