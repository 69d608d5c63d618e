//! Source loading, tiling to a uniform 480×480 size and pseudo-instance
//! promotion for semantic sources.

mod coco;
mod components;
mod resize;
mod source;
mod tiling;

pub use coco::{rasterize_polygons, SourceEntry, SourceManifest};
pub use components::{extract_pseudo_instances, label_components, promote_pseudo_instances, Connectivity, PseudoInstance};
pub use resize::{resize_nearest_labels, resize_semantic_image};
pub use source::{Annotations, InstanceAnnotation, Legend, SemanticLayer, SourceImage, SourceInstance, Tile};
pub use tiling::{tile_instance_image, tile_offsets, TilingParams};
