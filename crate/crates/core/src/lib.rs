//! Building blocks for turning aerial segmentation sources into a
//! referring-expression segmentation dataset.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`ingest`] loads sources, cuts 480×480 tiles and promotes semantic
//!   classes to pseudo-instances.
//! * [`targets`] builds addressable targets (instances, clusters, class
//!   groups, semantic regions) and extracts their descriptive cues.
//! * [`expressions`] expands cues into template expressions and removes
//!   ambiguous duplicates.
//! * [`filters`] simulates historic imagery.
//! * [`dataset`] serialises masks and manifests, assigns splits and
//!   computes statistics.
//! * [`metrics`] scores predicted masks.

pub mod dataset;
pub mod error;
pub mod expressions;
pub mod filters;
pub mod ingest;
pub mod mask;
pub mod metrics;
pub mod synthetic;
pub mod targets;

pub use error::{Error, Result};
pub use mask::{BBox, Mask};

/// Side length of every tile in the dataset.
pub const TILE_SIZE: u32 = 480;
