//! Pointwise tonal and noise degradations that mimic archival aerial
//! photography, plus the training-time sampling policy.
//!
//! All arithmetic is done in `f64`; 8-bit quantisation happens once, at the
//! end of [`apply`], rounding half away from zero. Noise is drawn in
//! row-major order, one draw per pixel, from a ChaCha8 stream seeded with
//! [`FilterSpec::seed`].

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Luminance weights for R, G, B.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Sepia matrix, rows producing output channels 0, 1, 2.
pub const SEPIA: [[f64; 3]; 3] = [
    [0.272, 0.534, 0.131],
    [0.349, 0.686, 0.168],
    [0.393, 0.769, 0.189],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    None,
    Grayscale,
    GrayscaleGrain,
    SepiaNoise,
}

impl FilterKind {
    pub const HISTORIC: [FilterKind; 3] = [FilterKind::Grayscale, FilterKind::GrayscaleGrain, FilterKind::SepiaNoise];

    pub fn as_str(&self) -> &'static str {
        match self {
            FilterKind::None => "none",
            FilterKind::Grayscale => "grayscale",
            FilterKind::GrayscaleGrain => "grayscale_grain",
            FilterKind::SepiaNoise => "sepia_noise",
        }
    }

    /// File-name suffix for filtered variants.
    pub fn suffix(&self) -> &'static str {
        match self {
            FilterKind::None => "",
            FilterKind::Grayscale => "_bw",
            FilterKind::GrayscaleGrain => "_grain",
            FilterKind::SepiaNoise => "_sepia",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [FilterKind::None, FilterKind::Grayscale, FilterKind::GrayscaleGrain, FilterKind::SepiaNoise]
            .into_iter()
            .find(|k| k.as_str() == s || k.suffix().trim_start_matches('_') == s)
            .ok_or_else(|| Error::Invalid(format!("unknown filter kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub gamma: f64,
    pub contrast: f64,
    /// Standard deviation of the film grain, in 8-bit units.
    pub grain_sigma: f64,
    /// Uniform sensor noise range `[low, high)`.
    pub noise_range: (f64, f64),
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            gamma: 1.2,
            contrast: 0.8,
            grain_sigma: 0.1 * 255.0,
            noise_range: (0.0, 50.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub params: FilterParams,
    pub seed: u64,
}

impl FilterSpec {
    pub fn new(kind: FilterKind, seed: u64) -> Self {
        Self {
            kind,
            params: FilterParams::default(),
            seed,
        }
    }
}

/// Single-channel floating-point image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayF64 {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

/// Three-channel floating-point image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbF64 {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

impl RgbF64 {
    pub fn from_rgb8(img: &RgbImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.pixels().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect(),
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let mut out = RgbImage::new(self.width, self.height);
        for (dst, src) in out.pixels_mut().zip(&self.data) {
            *dst = Rgb(src.map(quantize));
        }
        out
    }
}

impl GrayF64 {
    fn map(&self, f: impl Fn(f64) -> f64) -> GrayF64 {
        GrayF64 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn to_rgb(&self) -> RgbF64 {
        RgbF64 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| [v; 3]).collect(),
        }
    }
}

pub fn clip(v: f64) -> f64 {
    v.clamp(0.0, 255.0)
}

/// Rounds half away from zero into `[0, 255]`.
pub fn quantize(v: f64) -> u8 {
    clip(v).round() as u8
}

pub fn to_grayscale(img: &RgbF64) -> GrayF64 {
    GrayF64 {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]).collect(),
    }
}

pub fn apply_gamma(img: &GrayF64, gamma: f64) -> Result<GrayF64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("{gamma} must be positive"),
        });
    }
    Ok(img.map(|v| 255.0 * (v / 255.0).powf(gamma)))
}

/// Linear contrast change around the image's own mean.
pub fn apply_contrast(img: &GrayF64, contrast: f64) -> GrayF64 {
    let mu = img.mean();
    img.map(|v| (v - mu) * contrast + mu)
}

pub fn add_gaussian_grain(img: &GrayF64, sigma: f64, rng: &mut impl Rng) -> Result<GrayF64> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("{sigma} must be non-negative"),
        });
    }
    if sigma == 0.0 {
        return Ok(img.map(clip));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter {
        name: "sigma",
        reason: e.to_string(),
    })?;
    Ok(GrayF64 {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| clip(v + normal.sample(rng))).collect(),
    })
}

pub fn apply_sepia(img: &RgbF64) -> RgbF64 {
    RgbF64 {
        width: img.width,
        height: img.height,
        data: img
            .data
            .iter()
            .map(|p| SEPIA.map(|row| clip(row[0] * p[0] + row[1] * p[1] + row[2] * p[2])))
            .collect(),
    }
}

/// Adds one `U[low, high)` draw per pixel to all channels, then clips.
pub fn add_uniform_noise(img: &RgbF64, range: (f64, f64), rng: &mut impl Rng) -> Result<RgbF64> {
    let uniform = Uniform::new(range.0, range.1).map_err(|e| Error::InvalidParameter {
        name: "noise_range",
        reason: e.to_string(),
    })?;
    Ok(RgbF64 {
        width: img.width,
        height: img.height,
        data: img
            .data
            .iter()
            .map(|p| {
                let xi = uniform.sample(rng);
                p.map(|v| clip(v + xi))
            })
            .collect(),
    })
}

/// Runs the filter pipeline in floating point without quantising.
pub fn apply_f64(spec: &FilterSpec, img: &RgbF64) -> Result<RgbF64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = &spec.params;
    Ok(match spec.kind {
        FilterKind::None => img.clone(),
        FilterKind::Grayscale => to_grayscale(img).to_rgb(),
        FilterKind::GrayscaleGrain => {
            let gamma = apply_gamma(&to_grayscale(img), p.gamma)?;
            let contrast = apply_contrast(&gamma, p.contrast);
            add_gaussian_grain(&contrast, p.grain_sigma, &mut rng)?.to_rgb()
        }
        FilterKind::SepiaNoise => add_uniform_noise(&apply_sepia(img), p.noise_range, &mut rng)?,
    })
}

pub fn apply(spec: &FilterSpec, img: &RgbImage) -> Result<RgbImage> {
    if spec.kind == FilterKind::None {
        return Ok(img.clone());
    }
    Ok(apply_f64(spec, &RgbF64::from_rgb8(img))?.to_rgb8())
}

/// With probability `1 − p_filter` no filter; otherwise one of the three
/// historic filters with equal probability. The returned spec carries a
/// fresh seed drawn from `rng`.
pub fn sample_filter(rng: &mut impl Rng, p_filter: f64, params: FilterParams) -> Result<FilterSpec> {
    if !(0.0..=1.0).contains(&p_filter) {
        return Err(Error::InvalidParameter {
            name: "p_filter",
            reason: format!("{p_filter} is outside [0, 1]"),
        });
    }
    let u: f64 = rng.random();
    let kind = if u >= p_filter {
        FilterKind::None
    } else {
        FilterKind::HISTORIC[((u / p_filter * 3.0) as usize).min(2)]
    };
    Ok(FilterSpec {
        kind,
        params,
        seed: rng.random(),
    })
}

/// Per-image stream seed: `seed ⊕ H(image_id)` with H the first eight
/// bytes of SHA-256, so results do not depend on processing order.
pub fn image_seed(seed: u64, image_id: &str) -> u64 {
    let digest = Sha256::digest(image_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(v: &[f64]) -> GrayF64 {
        GrayF64 {
            width: v.len() as u32,
            height: 1,
            data: v.to_vec(),
        }
    }

    fn rgb(px: [f64; 3]) -> RgbF64 {
        RgbF64 {
            width: 1,
            height: 1,
            data: vec![px],
        }
    }

    #[test]
    fn grayscale_values() {
        assert!((to_grayscale(&rgb([255.0; 3])).data[0] - 255.0).abs() < 1e-9);
        assert_eq!(to_grayscale(&rgb([0.0; 3])).data[0], 0.0);
        assert!((to_grayscale(&rgb([255.0, 0.0, 0.0])).data[0] - 76.245).abs() < 1e-9);
    }

    #[test]
    fn gamma_values() {
        let out = apply_gamma(&gray(&[0.0, 255.0, 128.0]), 1.2).unwrap();
        assert_eq!(out.data[0], 0.0);
        assert!((out.data[1] - 255.0).abs() < 1e-9);
        assert!((out.data[2] - 111.5).abs() < 0.1, "{}", out.data[2]);
        assert_eq!(apply_gamma(&gray(&[37.0]), 1.0).unwrap().data[0], 37.0);
        assert!(apply_gamma(&gray(&[1.0]), 0.0).is_err());
        assert!(apply_gamma(&gray(&[1.0]), -1.0).is_err());
    }

    #[test]
    fn contrast_values() {
        let out = apply_contrast(&gray(&[0.0, 200.0, 100.0]), 0.8);
        // mean is 100
        assert_eq!(out.data[2], 100.0);
        assert!((out.data[1] - 180.0).abs() < 1e-9);
        assert_eq!(apply_contrast(&gray(&[3.0, 9.0]), 1.0).data, vec![3.0, 9.0]);
    }

    #[test]
    fn zero_sigma_grain_is_identity() {
        let g = gray(&[0.0, 12.5, 255.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(add_gaussian_grain(&g, 0.0, &mut rng).unwrap(), g);
    }

    #[test]
    fn sepia_values() {
        assert_eq!(apply_sepia(&rgb([0.0; 3])).data[0], [0.0; 3]);
        let white = apply_sepia(&rgb([255.0; 3])).data[0];
        assert!((white[0] - 0.937 * 255.0).abs() < 1e-9);
        assert_eq!(white[1], 255.0);
        assert_eq!(white[2], 255.0);
        let g = 100.0;
        let out = apply_sepia(&rgb([g; 3])).data[0];
        assert!((out[0] - 0.937 * g).abs() < 1e-9);
        assert!((out[1] - (1.203 * g).min(255.0)).abs() < 1e-9);
        assert!((out[2] - (1.351 * g).min(255.0)).abs() < 1e-9);
    }

    #[test]
    fn uniform_noise_only_brightens() {
        let img = RgbF64 {
            width: 100,
            height: 1,
            data: vec![[10.0, 20.0, 30.0]; 100],
        };
        let out = add_uniform_noise(&img, (0.0, 50.0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for (a, b) in img.data.iter().zip(&out.data) {
            for c in 0..3 {
                assert!(b[c] >= a[c]);
            }
        }
    }

    #[test]
    fn none_is_identity_and_grayscale_replicates() {
        let img = RgbImage::from_fn(16, 16, |x, y| Rgb([x as u8 * 10, y as u8 * 7, 99]));
        assert_eq!(apply(&FilterSpec::new(FilterKind::None, 0), &img).unwrap(), img);
        let g = apply(&FilterSpec::new(FilterKind::Grayscale, 0), &img).unwrap();
        assert!(g.pixels().all(|p| p[0] == p[1] && p[1] == p[2]));
    }

    #[test]
    fn same_seed_same_bytes() {
        let img = RgbImage::from_fn(32, 32, |x, y| Rgb([x as u8 * 5, y as u8 * 3, 128]));
        for kind in FilterKind::HISTORIC {
            let spec = FilterSpec::new(kind, 42);
            assert_eq!(apply(&spec, &img).unwrap(), apply(&spec, &img).unwrap());
        }
    }

    #[test]
    fn quantize_rounds_half_away_from_zero() {
        assert_eq!(quantize(0.5), 1);
        assert_eq!(quantize(1.49), 1);
        assert_eq!(quantize(254.5), 255);
        assert_eq!(quantize(300.0), 255);
        assert_eq!(quantize(-3.0), 0);
    }

    #[test]
    fn sampler_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            assert_eq!(sample_filter(&mut rng, 0.0, FilterParams::default()).unwrap().kind, FilterKind::None);
            assert_ne!(sample_filter(&mut rng, 1.0, FilterParams::default()).unwrap().kind, FilterKind::None);
        }
        assert!(sample_filter(&mut rng, 1.5, FilterParams::default()).is_err());
    }

    #[test]
    fn kind_names_parse() {
        assert_eq!("sepia".parse::<FilterKind>().unwrap(), FilterKind::SepiaNoise);
        assert_eq!("grayscale_grain".parse::<FilterKind>().unwrap(), FilterKind::GrayscaleGrain);
        assert!("vignette".parse::<FilterKind>().is_err());
    }
}
