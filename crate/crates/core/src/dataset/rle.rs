//! Column-major run-length encoding, starting with a background run.

use serde::{Deserialize, Serialize};

use crate::{Error, Mask, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn encode(mask: &Mask) -> RleMask {
        let (w, h) = mask.dims();
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                let v = mask.get(x, y);
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        RleMask { size: [h, w], counts }
    }

    pub fn height(&self) -> u32 {
        self.size[0]
    }

    pub fn width(&self) -> u32 {
        self.size[1]
    }

    pub fn decode(&self) -> Result<Mask> {
        let [h, w] = self.size;
        let expected = h as u64 * w as u64;
        let sum: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if sum != expected {
            return Err(Error::InvalidRle { sum, expected });
        }
        let mut data = vec![false; expected as usize];
        let mut pos = 0usize;
        for (i, &run) in self.counts.iter().enumerate() {
            if i % 2 == 1 {
                for p in pos..pos + run as usize {
                    // column-major position → row-major index
                    let (x, y) = (p / h as usize, p % h as usize);
                    data[y * w as usize + x] = true;
                }
            }
            pos += run as usize;
        }
        Mask::from_vec(w, h, data)
    }

    /// Foreground pixel count without decoding.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Parses the compact string form used by COCO tooling (6-bit chunks
    /// offset by 48, runs after the second delta-coded against `counts[i-2]`).
    pub fn from_coco_string(s: &str, height: u32, width: u32) -> Result<RleMask> {
        let bytes = s.as_bytes();
        let mut counts: Vec<i64> = Vec::new();
        let mut p = 0;
        while p < bytes.len() {
            let mut x: i64 = 0;
            let mut k = 0;
            loop {
                let c = *bytes.get(p).ok_or_else(|| Error::Invalid("truncated COCO RLE string".into()))? as i64 - 48;
                if !(0..64).contains(&c) {
                    return Err(Error::Invalid(format!("invalid COCO RLE byte {}", bytes[p])));
                }
                x |= (c & 0x1f) << (5 * k);
                p += 1;
                k += 1;
                if c & 0x20 == 0 {
                    if c & 0x10 != 0 {
                        x |= -1i64 << (5 * k);
                    }
                    break;
                }
            }
            if counts.len() > 2 {
                x += counts[counts.len() - 2];
            }
            counts.push(x);
        }
        let counts = counts
            .into_iter()
            .map(|c| u32::try_from(c).map_err(|_| Error::Invalid(format!("negative run {c} in COCO RLE"))))
            .collect::<Result<Vec<_>>>()?;
        let rle = RleMask {
            size: [height, width],
            counts,
        };
        let sum: u64 = rle.counts.iter().map(|&c| c as u64).sum();
        if sum != height as u64 * width as u64 {
            return Err(Error::InvalidRle {
                sum,
                expected: height as u64 * width as u64,
            });
        }
        Ok(rle)
    }

    pub fn to_coco_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.counts.len() {
            let mut x = self.counts[i] as i64;
            if i > 2 {
                x -= self.counts[i - 2] as i64;
            }
            loop {
                let mut c = x & 0x1f;
                x >>= 5;
                let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
                if more {
                    c |= 0x20;
                }
                out.push((c as u8 + 48) as char);
                if !more {
                    break;
                }
            }
        }
        out
    }
}
