//! Dataset serialisation, split assignment and statistics.

mod manifest;
mod rle;
mod splits;
mod stats;

pub use manifest::{
    load_manifest, write_manifest, DatasetManifest, ExpressionRecord, FilterProvenance, ImageRecord, ManifestIndex,
    Split, TargetRecord, SCHEMA_VERSION, SHARD_SIZE,
};
pub use rle::RleMask;
pub use splits::{assign_splits, assign_splits_weighted};
pub use stats::{compute_stats, double_entry, DatasetStats, SplitCounts};
