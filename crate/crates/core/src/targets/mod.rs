//! Addressable targets of a tile and the cues used to describe them.

mod color;
mod cues;
mod dbscan;
mod distance;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use color::{color_classify, rgb_to_hsv, ColorLabel, ColorParams};
pub use cues::{
    directional_relations, extreme_flags, grid_cell_of, grid_position, Direction, ExtremeFlag, GridCell, Landmark,
    Relation,
};
pub use dbscan::dbscan;
pub use distance::edge_distance;

use crate::ingest::Tile;
use crate::{BBox, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Instance,
    Cluster,
    ClassGroup,
    SemanticRegion,
}

impl TargetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TargetKind::Instance => "instance",
            TargetKind::Cluster => "cluster",
            TargetKind::ClassGroup => "class_group",
            TargetKind::SemanticRegion => "semantic_region",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Target {
    pub id: String,
    pub kind: TargetKind,
    pub category: String,
    pub mask: Mask,
    pub bbox: BBox,
    /// Instance target ids for clusters and class groups.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetParams {
    /// DBSCAN neighbourhood radius in pixels (edge-to-edge).
    pub eps: f64,
    pub min_pts: usize,
    /// Larger clusters are discarded.
    pub max_cluster_size: usize,
    /// Semantic regions smaller than this are not described.
    pub min_region_area: u64,
    /// Classes promoted to pseudo-instances, never semantic regions.
    pub promoted_classes: BTreeSet<String>,
    /// Label-raster classes that are never targets.
    pub ignore_classes: BTreeSet<String>,
}

impl Default for TargetParams {
    fn default() -> Self {
        Self {
            eps: 50.0,
            min_pts: 2,
            max_cluster_size: 8,
            min_region_area: 100,
            promoted_classes: ["building".to_string(), "water".to_string()].into(),
            ignore_classes: ["background".to_string(), "no data".to_string()].into(),
        }
    }
}

fn contains_ci(set: &BTreeSet<String>, name: &str) -> bool {
    set.iter().any(|s| s.eq_ignore_ascii_case(name))
}

pub(crate) fn target_id(tile_id: &str, index: usize) -> String {
    format!("{tile_id}-t{index:03}")
}

fn union_all<'a>(masks: impl IntoIterator<Item = &'a Mask>) -> Mask {
    let mut it = masks.into_iter();
    let first = it.next().expect("at least one mask").clone();
    it.fold(first, |acc, m| acc.union(m).expect("tile masks share dims"))
}

struct Shape<'a> {
    mask: &'a Mask,
    bbox: BBox,
    boundary: Vec<(u32, u32)>,
}

fn shapes_within(a: &Shape<'_>, b: &Shape<'_>, eps: f64) -> bool {
    let gap = a.bbox.gap(&b.bbox);
    if gap > eps {
        return false;
    }
    if gap == 0.0 && a.mask.intersection_area(b.mask).unwrap_or(0) > 0 {
        return true;
    }
    distance::boundary_distance(&a.boundary, &b.boundary) <= eps
}

/// Builds, in order: every instance; DBSCAN clusters of same-category
/// instances (2..=`max_cluster_size` members); one class group per category
/// with at least two instances; one semantic region per remaining label class.
pub fn build_targets(tile: &Tile, params: &TargetParams) -> Vec<Target> {
    let mut targets = Vec::new();
    let mut instances: Vec<_> = tile.instances.iter().filter(|i| !i.mask.is_empty()).collect();
    instances.sort_by_key(|i| i.id);

    for inst in &instances {
        targets.push(Target {
            id: target_id(&tile.id, targets.len()),
            kind: TargetKind::Instance,
            category: inst.category.clone(),
            mask: inst.mask.clone(),
            bbox: inst.mask.bbox().expect("non-empty"),
            members: Vec::new(),
        });
    }

    let mut by_category: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        by_category.entry(inst.category.as_str()).or_default().push(i);
    }

    let mut clusters = Vec::new();
    for (category, idx) in &by_category {
        let shapes: Vec<Shape<'_>> = idx
            .iter()
            .map(|&i| Shape {
                mask: &targets[i].mask,
                bbox: targets[i].bbox,
                boundary: targets[i].mask.boundary(),
            })
            .collect();
        for members in dbscan(shapes.len(), params.min_pts, |a, b| shapes_within(&shapes[a], &shapes[b], params.eps)) {
            if members.len() < 2 || members.len() > params.max_cluster_size {
                continue;
            }
            let member_idx: Vec<usize> = members.iter().map(|&m| idx[m]).collect();
            clusters.push((category.to_string(), member_idx));
        }
    }
    for (category, member_idx) in clusters {
        let mask = union_all(member_idx.iter().map(|&i| &targets[i].mask));
        targets.push(Target {
            id: target_id(&tile.id, targets.len()),
            kind: TargetKind::Cluster,
            category,
            bbox: mask.bbox().expect("non-empty"),
            mask,
            members: member_idx.iter().map(|&i| targets[i].id.clone()).collect(),
        });
    }

    for (category, idx) in &by_category {
        if idx.len() < 2 {
            continue;
        }
        let mask = union_all(idx.iter().map(|&i| &targets[i].mask));
        targets.push(Target {
            id: target_id(&tile.id, targets.len()),
            kind: TargetKind::ClassGroup,
            category: category.to_string(),
            bbox: mask.bbox().expect("non-empty"),
            mask,
            members: idx.iter().map(|&i| targets[i].id.clone()).collect(),
        });
    }

    if let Some(sem) = &tile.semantic {
        for class in sem.classes_present() {
            let Some(name) = sem.legend.name(class) else { continue };
            if contains_ci(&params.promoted_classes, name) || contains_ci(&params.ignore_classes, name) {
                continue;
            }
            let mask = sem.class_mask(class);
            if mask.area() < params.min_region_area.max(1) {
                continue;
            }
            targets.push(Target {
                id: target_id(&tile.id, targets.len()),
                kind: TargetKind::SemanticRegion,
                category: name.to_string(),
                bbox: mask.bbox().expect("non-empty"),
                mask,
                members: Vec::new(),
            });
        }
    }
    targets
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSet {
    pub category_name: String,
    pub grid_cell: GridCell,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extreme_flags: Vec<ExtremeFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<ColorLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<Relation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueParams {
    pub color: ColorParams,
    /// Center-to-center cutoff for directional relations.
    pub relation_max_dist: f64,
}

impl Default for CueParams {
    fn default() -> Self {
        Self {
            color: ColorParams::default(),
            relation_max_dist: 200.0,
        }
    }
}

/// Cue sets aligned with `targets`. Extreme flags, color and relations
/// are only extracted for single instances; relation landmarks are the
/// other single instances of the tile.
pub fn extract_cues(tile: &Tile, targets: &[Target], params: &CueParams) -> Vec<CueSet> {
    let tile_size = tile.pixels.width();
    let mut cues: Vec<CueSet> = targets
        .iter()
        .map(|t| CueSet {
            category_name: t.category.clone(),
            grid_cell: grid_position(&t.bbox, tile_size),
            extreme_flags: Vec::new(),
            color: None,
            relations: Vec::new(),
        })
        .collect();

    let instance_idx: Vec<usize> = (0..targets.len()).filter(|&i| targets[i].kind == TargetKind::Instance).collect();

    let mut by_category: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &instance_idx {
        by_category.entry(targets[i].category.as_str()).or_default().push(i);
    }
    for idx in by_category.values() {
        let centers: Vec<(f64, f64)> = idx.iter().map(|&i| targets[i].bbox.center()).collect();
        for (&i, flags) in idx.iter().zip(extreme_flags(&centers)) {
            cues[i].extreme_flags = flags;
        }
    }

    for &i in &instance_idx {
        let t = &targets[i];
        let pixels = t.mask.pixels().map(|(x, y)| tile.pixels.get_pixel(x, y).0);
        cues[i].color = color_classify(pixels, &t.category, &params.color);

        let landmarks: Vec<Landmark<'_>> = instance_idx
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| Landmark {
                id: &targets[j].id,
                center: targets[j].bbox.center(),
                category: &targets[j].category,
            })
            .collect();
        cues[i].relations = directional_relations(t.bbox.center(), &landmarks, params.relation_max_dist);
    }
    cues
}
