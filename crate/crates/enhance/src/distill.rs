use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{EnhanceError, Result};

/// A validated teacher exchange: the request messages and the reply text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRecord {
    pub target_id: String,
    pub messages: Value,
    pub response: String,
}

/// Writes `k` seeded-sampled exchanges as chat-format JSON lines, one
/// `{"messages": [..., {"role": "assistant", ...}]}` object per line.
/// Returns the number of lines written.
pub fn export_distillation_pairs(records: &[TeacherRecord], k: usize, seed: u64, out: &Path) -> Result<usize> {
    // one record per target, ordered by id so the input order is irrelevant
    let unique: BTreeMap<&str, &TeacherRecord> = records.iter().map(|r| (r.target_id.as_str(), r)).collect();
    if unique.len() < k {
        return Err(EnhanceError::Shortfall {
            needed: k,
            available: unique.len(),
        });
    }
    let mut pool: Vec<&TeacherRecord> = unique.into_values().collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(EnhanceError::io(parent))?;
    }
    let mut buf = Vec::new();
    for r in pool.into_iter().take(k) {
        let mut messages = r.messages.as_array().cloned().unwrap_or_default();
        messages.push(json!({ "role": "assistant", "content": r.response }));
        serde_json::to_writer(&mut buf, &json!({ "messages": messages })).expect("json");
        buf.write_all(b"\n").expect("vec write");
    }
    std::fs::write(out, buf).map_err(EnhanceError::io(out))?;
    Ok(k)
}
