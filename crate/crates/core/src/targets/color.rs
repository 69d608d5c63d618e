use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorLabel {
    Light,
    Dark,
    Red,
    Orange,
    Yellow,
    Green,
    Blue,
    Purple,
}

impl ColorLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ColorLabel::Light => "light",
            ColorLabel::Dark => "dark",
            ColorLabel::Red => "red",
            ColorLabel::Orange => "orange",
            ColorLabel::Yellow => "yellow",
            ColorLabel::Green => "green",
            ColorLabel::Blue => "blue",
            ColorLabel::Purple => "purple",
        }
    }

    const CHROMATIC: [ColorLabel; 6] = [
        ColorLabel::Red,
        ColorLabel::Orange,
        ColorLabel::Yellow,
        ColorLabel::Green,
        ColorLabel::Blue,
        ColorLabel::Purple,
    ];

    /// Palette bin for a hue in degrees: red [345,15), orange [15,45),
    /// yellow [45,75), green [75,165), blue [165,255), purple [255,345).
    pub fn from_hue(hue: f64) -> ColorLabel {
        let h = hue.rem_euclid(360.0);
        if !(15.0..345.0).contains(&h) {
            ColorLabel::Red
        } else if h < 45.0 {
            ColorLabel::Orange
        } else if h < 75.0 {
            ColorLabel::Yellow
        } else if h < 165.0 {
            ColorLabel::Green
        } else if h < 255.0 {
            ColorLabel::Blue
        } else {
            ColorLabel::Purple
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorParams {
    /// Share of all masked pixels needed for "light"/"dark".
    pub achromatic_dominance: f64,
    /// Share of chromatic pixels one hue bin needs.
    pub chromatic_dominance: f64,
    pub light_max_saturation: f64,
    pub light_min_value: f64,
    pub dark_max_value: f64,
    /// Categories that never receive a color.
    pub no_color_categories: BTreeSet<String>,
}

impl Default for ColorParams {
    fn default() -> Self {
        Self {
            achromatic_dominance: 0.70,
            chromatic_dominance: 0.60,
            light_max_saturation: 0.2,
            light_min_value: 0.85,
            dark_max_value: 0.25,
            no_color_categories: ["building".to_string(), "water".to_string()].into(),
        }
    }
}

/// `(hue degrees, saturation, value)` with s, v in [0, 1].
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, max)
}

/// Color cue for the pixels under a mask, `None` when no label is dominant
/// enough or the category is excluded.
pub fn color_classify(pixels: impl IntoIterator<Item = [u8; 3]>, category: &str, params: &ColorParams) -> Option<ColorLabel> {
    if params.no_color_categories.iter().any(|c| c.eq_ignore_ascii_case(category)) {
        return None;
    }
    let (mut total, mut light, mut dark, mut chromatic) = (0u64, 0u64, 0u64, 0u64);
    let mut bins = [0u64; 6];
    for px in pixels {
        total += 1;
        let (h, s, v) = rgb_to_hsv(px);
        if v <= params.dark_max_value {
            dark += 1;
        } else if s <= params.light_max_saturation {
            if v >= params.light_min_value {
                light += 1;
            }
        } else {
            chromatic += 1;
            let bin = ColorLabel::CHROMATIC.iter().position(|c| *c == ColorLabel::from_hue(h)).expect("chromatic");
            bins[bin] += 1;
        }
    }
    if total == 0 {
        return None;
    }
    let achromatic = params.achromatic_dominance * total as f64;
    if light as f64 >= achromatic {
        return Some(ColorLabel::Light);
    }
    if dark as f64 >= achromatic {
        return Some(ColorLabel::Dark);
    }
    if chromatic == 0 {
        return None;
    }
    let (best, &count) = bins.iter().enumerate().max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))?;
    (count as f64 >= params.chromatic_dominance * chromatic as f64).then_some(ColorLabel::CHROMATIC[best])
}
