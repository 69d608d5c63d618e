use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::{EnhanceError, EnhancementResult, Result};

/// One JSON file per content-hash key.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: String,
    model: String,
    instruction: String,
    result: EnhancementResult,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(EnhanceError::io(&dir))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<EnhancementResult> {
        let bytes = std::fs::read(self.path(key)).ok()?;
        let entry: Entry = serde_json::from_slice(&bytes).ok()?;
        (entry.key == key).then_some(entry.result)
    }

    /// Write-then-rename so readers never see a partial file.
    pub fn put(&self, key: &str, model: &str, instruction: &str, result: &EnhancementResult) -> Result<()> {
        let entry = Entry {
            key: key.to_string(),
            model: model.to_string(),
            instruction: instruction.to_string(),
            result: result.clone(),
        };
        let tmp = self.dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let body = serde_json::to_vec_pretty(&entry).expect("entry serializes");
        std::fs::write(&tmp, body).map_err(EnhanceError::io(&tmp))?;
        let dst = self.path(key);
        std::fs::rename(&tmp, &dst).map_err(EnhanceError::io(&dst))
    }
}
