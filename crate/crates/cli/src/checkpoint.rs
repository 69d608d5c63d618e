//! On-disk stage outputs inside the work directory.
//!
//! ```text
//! work/
//!   tiles/<tile>.png, tiles/<tile>.labels.png
//!   tiles.json            tile index with clipped instances
//!   targets.json          targets with masks and cues
//!   expressions.raw.json  rule expressions before dedup
//!   expressions.json      deduplicated, with ids
//!   enhanced.json         LLM additions (optional)
//!   <stage>.stamp         input hash the output was computed from
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use forge_core::dataset::{ExpressionRecord, RleMask};
use forge_core::expressions::Expression;
use forge_core::ingest::{InstanceAnnotation, Legend, SemanticLayer, Tile};
use forge_core::targets::{CueSet, Target, TargetKind};
use forge_core::BBox;
use image::DynamicImage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{at, Result};

pub const TILES: &str = "tiles.json";
pub const TARGETS: &str = "targets.json";
pub const RAW_EXPRESSIONS: &str = "expressions.raw.json";
pub const EXPRESSIONS: &str = "expressions.json";
pub const ENHANCED: &str = "enhanced.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilesCheckpoint {
    pub legend: BTreeMap<u8, String>,
    pub tiles: Vec<TileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub id: String,
    pub source_id: String,
    pub source_dataset: String,
    pub origin: [u32; 2],
    /// Relative to the work directory.
    pub image: PathBuf,
    pub image_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u64,
    pub category: String,
    pub mask: RleMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetsCheckpoint {
    pub tiles: Vec<TileTargets>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileTargets {
    pub tile_id: String,
    pub targets: Vec<TargetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub id: String,
    pub kind: TargetKind,
    pub category: String,
    pub mask: RleMask,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
    pub cues: CueSet,
}

impl TargetEntry {
    pub fn from_target(t: &Target, cues: CueSet) -> Self {
        Self {
            id: t.id.clone(),
            kind: t.kind,
            category: t.category.clone(),
            mask: RleMask::encode(&t.mask),
            bbox: t.bbox,
            members: t.members.clone(),
            cues,
        }
    }

    pub fn to_target(&self) -> forge_core::Result<Target> {
        Ok(Target {
            id: self.id.clone(),
            kind: self.kind,
            category: self.category.clone(),
            mask: self.mask.decode()?,
            bbox: self.bbox,
            members: self.members.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExpressions {
    pub tiles: Vec<TileRawExpressions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRawExpressions {
    pub tile_id: String,
    pub expressions: Vec<Expression>,
}

/// Used for both `expressions.json` and `enhanced.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionSet {
    pub tiles: Vec<TileExpressions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileExpressions {
    pub tile_id: String,
    pub expressions: Vec<ExpressionRecord>,
}

impl ExpressionSet {
    pub fn count(&self) -> usize {
        self.tiles.iter().map(|t| t.expressions.len()).sum()
    }
}

pub fn expression_id(target_id: &str, n: usize) -> String {
    format!("{target_id}-e{n:02}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path, stage: &'static str) -> Result<String> {
    let bytes = std::fs::read(path).map_err(at(stage, &path.display().to_string()))?;
    Ok(sha256_hex(&bytes))
}

/// Pretty JSON with a trailing newline, written to a temporary file and
/// renamed into place so a crash never leaves a truncated checkpoint.
pub fn write_json<T: Serialize>(path: &Path, value: &T, stage: &'static str) -> Result<()> {
    let item = path.display().to_string();
    let mut text = serde_json::to_string_pretty(value).map_err(at(stage, &item))?;
    text.push('\n');
    write_atomic(path, text.as_bytes(), stage)
}

pub fn write_atomic(path: &Path, bytes: &[u8], stage: &'static str) -> Result<()> {
    let item = path.display().to_string();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(at(stage, &item))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).map_err(at(stage, &item))?;
    std::fs::rename(&tmp, path).map_err(at(stage, &item))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &'static str) -> Result<T> {
    let item = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(at(stage, &item))?;
    serde_json::from_str(&text).map_err(at(stage, &item))
}

/// Rebuilds a tile (pixels, labels, instances) from its record.
pub fn load_tile(work: &Path, rec: &TileRecord, legend: &BTreeMap<u8, String>, stage: &'static str) -> Result<Tile> {
    let pixels = image::open(work.join(&rec.image)).map_err(at(stage, &rec.id))?.to_rgb8();
    let semantic = match &rec.labels {
        Some(p) => {
            let raster = match image::open(work.join(p)).map_err(at(stage, &rec.id))? {
                DynamicImage::ImageLuma8(g) => g,
                other => other.to_luma8(),
            };
            Some(SemanticLayer {
                raster,
                legend: Legend(legend.clone()),
            })
        }
        None => None,
    };
    let instances = rec
        .instances
        .iter()
        .map(|i| {
            Ok(InstanceAnnotation {
                id: i.id,
                category: i.category.clone(),
                mask: i.mask.decode().map_err(at(stage, &rec.id))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tile {
        id: rec.id.clone(),
        source_id: rec.source_id.clone(),
        source_dataset: rec.source_dataset.clone(),
        origin: (rec.origin[0], rec.origin[1]),
        pixels,
        instances,
        semantic,
    })
}
