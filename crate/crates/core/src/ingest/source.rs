use std::collections::BTreeMap;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::{Error, Mask, Result};

/// Class id → class name for label rasters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Legend(pub BTreeMap<u8, String>);

impl Legend {
    pub fn name(&self, class: u8) -> Option<&str> {
        self.0.get(&class).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<u8> {
        self.0.iter().find(|(_, n)| n.eq_ignore_ascii_case(name)).map(|(id, _)| *id)
    }
}

/// An annotated instance in source coordinates. `mask` is local to the
/// instance's bounding region and placed at `origin`.
#[derive(Debug, Clone)]
pub struct SourceInstance {
    pub id: u64,
    pub category: String,
    pub origin: (u32, u32),
    pub mask: Mask,
}

impl SourceInstance {
    pub fn area(&self) -> u64 {
        self.mask.area()
    }
}

#[derive(Debug, Clone)]
pub enum Annotations {
    Instances(Vec<SourceInstance>),
    Labels { raster: GrayImage, legend: Legend },
}

#[derive(Debug, Clone)]
pub struct SourceImage {
    pub id: String,
    pub dataset: String,
    pub pixels: RgbImage,
    pub annotations: Annotations,
}

impl SourceImage {
    pub fn new(id: impl Into<String>, dataset: impl Into<String>, pixels: RgbImage, annotations: Annotations) -> Result<Self> {
        let id = id.into();
        let (w, h) = pixels.dimensions();
        if w == 0 || h == 0 {
            return Err(Error::Invalid(format!("source {id} has zero size")));
        }
        match &annotations {
            Annotations::Instances(instances) => {
                for inst in instances {
                    let (mw, mh) = inst.mask.dims();
                    if inst.origin.0 + mw > w || inst.origin.1 + mh > h {
                        return Err(Error::Invalid(format!(
                            "source {id}: instance {} extends past the image bounds",
                            inst.id
                        )));
                    }
                }
            }
            Annotations::Labels { raster, .. } => {
                if raster.dimensions() != (w, h) {
                    return Err(Error::DimensionMismatch {
                        expected: (w, h),
                        actual: raster.dimensions(),
                    });
                }
            }
        }
        Ok(Self {
            id,
            dataset: dataset.into(),
            pixels,
            annotations,
        })
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

#[derive(Debug, Clone)]
pub struct InstanceAnnotation {
    pub id: u64,
    pub category: String,
    /// Tile-sized mask.
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticLayer {
    pub raster: GrayImage,
    pub legend: Legend,
}

impl SemanticLayer {
    pub fn class_mask(&self, class: u8) -> Mask {
        Mask::from_fn(self.raster.width(), self.raster.height(), |x, y| {
            self.raster.get_pixel(x, y)[0] == class
        })
    }

    /// Class ids present in the raster, ascending.
    pub fn classes_present(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for p in self.raster.pixels() {
            seen[p[0] as usize] = true;
        }
        (0..=255u8).filter(|&c| seen[c as usize]).collect()
    }
}

/// A 480×480 patch with its clipped annotations.
#[derive(Debug, Clone)]
pub struct Tile {
    pub id: String,
    pub source_id: String,
    pub source_dataset: String,
    pub origin: (u32, u32),
    pub pixels: RgbImage,
    pub instances: Vec<InstanceAnnotation>,
    pub semantic: Option<SemanticLayer>,
}

pub(crate) fn tile_id(source_id: &str, origin: (u32, u32)) -> String {
    let safe: String = source_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{safe}_{}_{}", origin.0, origin.1)
}
