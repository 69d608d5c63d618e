use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Split;
use crate::{Error, Result};

/// Assigns a split per source image so every tile cut from one source
/// lands on the same side. The sorted, de-duplicated source ids are
/// shuffled with `seed` and the first `round(n · test_fraction)` go to test.
pub fn assign_splits<S: AsRef<str>>(source_ids: &[S], test_fraction: f64, seed: u64) -> Result<BTreeMap<String, Split>> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "test_fraction",
            reason: format!("{test_fraction} is outside (0, 1)"),
        });
    }
    let unique: BTreeSet<&str> = source_ids.iter().map(AsRef::as_ref).collect();
    let mut ids: Vec<&str> = unique.into_iter().collect();
    let n_test = (ids.len() as f64 * test_fraction).round() as usize;
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), if i < n_test { Split::Test } else { Split::Train }))
        .collect())
}

/// Like [`assign_splits`] but balances a per-source weight (for example its
/// expression count) instead of the number of sources. Sources are visited
/// in seeded order and go to test while doing so brings the test weight
/// closer to `test_fraction` of the total, so the achieved share is within
/// half the largest weight of the target.
pub fn assign_splits_weighted<S: AsRef<str>>(
    sources: &[(S, u64)],
    test_fraction: f64,
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "test_fraction",
            reason: format!("{test_fraction} is outside (0, 1)"),
        });
    }
    let mut weights: BTreeMap<&str, u64> = BTreeMap::new();
    for (id, w) in sources {
        *weights.entry(id.as_ref()).or_default() += w;
    }
    let total: u64 = weights.values().sum();
    let target = total as f64 * test_fraction;
    let mut ids: Vec<(&str, u64)> = weights.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = 0.0;
    Ok(ids
        .into_iter()
        .map(|(id, w)| {
            let split = if (test + w as f64 - target).abs() < (test - target).abs() {
                test += w as f64;
                Split::Test
            } else {
                Split::Train
            };
            (id.to_string(), split)
        })
        .collect())
}
