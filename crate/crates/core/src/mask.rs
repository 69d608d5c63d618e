//! Dense binary masks and tight bounding boxes.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inclusive pixel extents `(x0, y0)..=(x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    /// Geometric center in pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 as f64 + self.x1 as f64) / 2.0,
            (self.y0 as f64 + self.y1 as f64) / 2.0,
        )
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Smallest Euclidean distance between pixel centers of the two boxes.
    /// A lower bound for the distance between any pixels they contain.
    pub fn gap(&self, other: &BBox) -> f64 {
        let dx = axis_gap(self.x0, self.x1, other.x0, other.x1);
        let dy = axis_gap(self.y0, self.y1, other.y0, other.y1);
        ((dx * dx + dy * dy) as f64).sqrt()
    }
}

fn axis_gap(a0: u32, a1: u32, b0: u32, b1: u32) -> i64 {
    if a1 < b0 {
        b0 as i64 - a1 as i64
    } else if b1 < a0 {
        a0 as i64 - b1 as i64
    } else {
        0
    }
}

/// Row-major binary mask.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::Invalid(format!(
                "mask buffer has {} pixels, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    /// Filled axis-aligned rectangle `[x0, x0+w) × [y0, y0+h)`, clipped to the mask.
    pub fn rect(width: u32, height: u32, x0: u32, y0: u32, w: u32, h: u32) -> Self {
        Self::from_fn(width, height, |x, y| {
            x >= x0 && x < x0.saturating_add(w) && y >= y0 && y < y0.saturating_add(h)
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn area(&self) -> u64 {
        self.data.iter().filter(|&&v| v).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Tight bounding box, `None` for an empty mask.
    pub fn bbox(&self) -> Option<BBox> {
        let mut bbox: Option<BBox> = None;
        for (x, y) in self.pixels() {
            bbox = Some(match bbox {
                None => BBox { x0: x, y0: y, x1: x, y1: y },
                Some(b) => BBox {
                    x0: b.x0.min(x),
                    y0: b.y0.min(y),
                    x1: b.x1.max(x),
                    y1: b.y1.max(y),
                },
            });
        }
        bbox
    }

    /// Coordinates of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// Set pixels with at least one 4-neighbour outside the mask (or the image).
    pub fn boundary(&self) -> Vec<(u32, u32)> {
        self.pixels()
            .filter(|&(x, y)| {
                x == 0
                    || y == 0
                    || x + 1 == self.width
                    || y + 1 == self.height
                    || !self.get(x - 1, y)
                    || !self.get(x + 1, y)
                    || !self.get(x, y - 1)
                    || !self.get(x, y + 1)
            })
            .collect()
    }

    fn check_dims(&self, other: &Mask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_dims(other)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        })
    }

    pub fn intersection_area(&self, other: &Mask) -> Result<u64> {
        self.check_dims(other)?;
        Ok(self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count() as u64)
    }

    pub fn union_area(&self, other: &Mask) -> Result<u64> {
        self.check_dims(other)?;
        Ok(self.data.iter().zip(&other.data).filter(|(a, b)| **a || **b).count() as u64)
    }

    /// Copy of the window `[x0, x0+w) × [y0, y0+h)`; pixels outside the source are unset.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Mask {
        Mask::from_fn(w, h, |x, y| {
            let (sx, sy) = (x0 + x, y0 + y);
            sx < self.width && sy < self.height && self.get(sx, sy)
        })
    }

    /// Grayscale rendering: 255 for set pixels.
    pub fn to_luma(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    /// Any non-zero pixel is foreground.
    pub fn from_luma(img: &image::GrayImage) -> Mask {
        Mask::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y)[0] != 0)
    }
}
