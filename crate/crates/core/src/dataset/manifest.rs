use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RleMask;
use crate::expressions::ExpressionSource;
use crate::filters::FilterKind;
use crate::targets::TargetKind;
use crate::{BBox, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Images per manifest shard.
pub const SHARD_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterProvenance {
    pub kind: FilterKind,
    pub seed: u64,
    /// Filtered variant, relative to the dataset root.
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    /// Relative to the dataset root.
    pub file: PathBuf,
    pub split: Split,
    pub source_dataset: String,
    pub source_id: String,
    pub origin: [u32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterProvenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub id: String,
    pub image_id: String,
    pub kind: TargetKind,
    pub category: String,
    pub mask: RleMask,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressionRecord {
    pub id: String,
    pub target_id: String,
    pub text: String,
    pub source: ExpressionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub images: Vec<ImageRecord>,
    pub targets: Vec<TargetRecord>,
    pub expressions: Vec<ExpressionRecord>,
}

/// Top-level `manifest.json` listing the shard files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestIndex {
    pub schema_version: u32,
    pub shards: Vec<PathBuf>,
}

impl DatasetManifest {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            ..Default::default()
        }
    }

    /// Every expression points at a target, every target at an image, and
    /// every target has at least one expression. Ids are unique.
    pub fn validate(&self) -> Result<()> {
        let mut images = HashSet::new();
        for img in &self.images {
            if !images.insert(img.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate image id {}", img.id)));
            }
        }
        let mut targets = HashMap::new();
        for t in &self.targets {
            if !images.contains(t.image_id.as_str()) {
                return Err(Error::DanglingReference(format!("target {} → image {}", t.id, t.image_id)));
            }
            if targets.insert(t.id.as_str(), 0usize).is_some() {
                return Err(Error::Invalid(format!("duplicate target id {}", t.id)));
            }
        }
        let mut expr_ids = HashSet::new();
        for e in &self.expressions {
            match targets.get_mut(e.target_id.as_str()) {
                Some(n) => *n += 1,
                None => {
                    return Err(Error::DanglingReference(format!("expression {} → target {}", e.id, e.target_id)));
                }
            }
            if !expr_ids.insert(e.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate expression id {}", e.id)));
            }
        }
        if let Some((t, _)) = targets.iter().filter(|(_, &n)| n == 0).min() {
            return Err(Error::Invalid(format!("target {t} has no expressions")));
        }
        Ok(())
    }

    fn merge(&mut self, other: DatasetManifest) {
        self.images.extend(other.images);
        self.targets.extend(other.targets);
        self.expressions.extend(other.expressions);
    }

    /// Splits into shards of at most `shard_size` images, each carrying
    /// the targets and expressions of its images.
    pub fn shards(&self, shard_size: usize) -> Vec<DatasetManifest> {
        let shard_size = shard_size.max(1);
        let mut image_shard = HashMap::new();
        let mut out: Vec<DatasetManifest> = Vec::new();
        for (i, img) in self.images.iter().enumerate() {
            if i % shard_size == 0 {
                out.push(DatasetManifest::new());
            }
            image_shard.insert(img.id.as_str(), i / shard_size);
            out.last_mut().expect("pushed").images.push(img.clone());
        }
        if out.is_empty() {
            out.push(DatasetManifest::new());
        }
        let mut target_shard = HashMap::new();
        for t in &self.targets {
            let s = image_shard.get(t.image_id.as_str()).copied().unwrap_or(0);
            target_shard.insert(t.id.as_str(), s);
            out[s].targets.push(t.clone());
        }
        for e in &self.expressions {
            let s = target_shard.get(e.target_id.as_str()).copied().unwrap_or(0);
            out[s].expressions.push(e.clone());
        }
        out
    }

    /// Expressions grouped by image id, in manifest order.
    pub fn expressions_by_image(&self) -> BTreeMap<&str, Vec<&ExpressionRecord>> {
        let target_image: HashMap<&str, &str> =
            self.targets.iter().map(|t| (t.id.as_str(), t.image_id.as_str())).collect();
        let mut out: BTreeMap<&str, Vec<&ExpressionRecord>> = BTreeMap::new();
        for e in &self.expressions {
            if let Some(img) = target_image.get(e.target_id.as_str()) {
                out.entry(img).or_default().push(e);
            }
        }
        out
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::io(path))
}

/// Writes `manifest.json` plus one `manifest-NNNNN.json` shard per
/// [`SHARD_SIZE`] images into `dir`. Returns the index path.
pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut shards = Vec::new();
    for (i, shard) in manifest.shards(SHARD_SIZE).iter().enumerate() {
        let name = PathBuf::from(format!("manifest-{i:05}.json"));
        write_json(&dir.join(&name), shard)?;
        shards.push(name);
    }
    let index_path = dir.join("manifest.json");
    write_json(
        &index_path,
        &ManifestIndex {
            schema_version: SCHEMA_VERSION,
            shards,
        },
    )?;
    Ok(index_path)
}

/// Loads either a shard index or a single manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::json(path))?;
    let version = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != SCHEMA_VERSION as u64 {
        return Err(Error::Invalid(format!("{}: unsupported schema_version {version}", path.display())));
    }
    if value.get("shards").is_some() {
        let index: ManifestIndex = serde_json::from_value(value).map_err(Error::json(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut manifest = DatasetManifest::new();
        for shard in &index.shards {
            manifest.merge(load_manifest(&base.join(shard))?);
        }
        Ok(manifest)
    } else {
        serde_json::from_value(value).map_err(Error::json(path))
    }
}
