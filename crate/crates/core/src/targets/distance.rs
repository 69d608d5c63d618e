use crate::{Error, Mask, Result};

/// Minimum Euclidean distance between pixel centers of the two masks'
/// boundaries. Overlapping or 8-adjacent (touching) masks are at distance 0.
pub fn edge_distance(a: &Mask, b: &Mask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMask);
    }
    if a.intersection_area(b)? > 0 {
        return Ok(0.0);
    }
    Ok(boundary_distance(&a.boundary(), &b.boundary()))
}

pub(crate) fn boundary_distance(a: &[(u32, u32)], b: &[(u32, u32)]) -> f64 {
    let mut best = i64::MAX;
    for &(ax, ay) in a {
        for &(bx, by) in b {
            let dx = ax as i64 - bx as i64;
            let dy = ay as i64 - by as i64;
            best = best.min(dx * dx + dy * dy);
        }
        if best <= 2 {
            return 0.0;
        }
    }
    (best as f64).sqrt()
}
