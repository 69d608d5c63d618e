use std::collections::BTreeSet;

use super::source::{InstanceAnnotation, Tile};
use crate::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone)]
pub struct PseudoInstance {
    pub class: u8,
    pub class_name: String,
    pub mask: Mask,
    pub area: u64,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling. Returns row-major labels (0 =
/// background, components numbered from 1 in raster-scan order of their
/// first pixel) and the component count.
pub fn label_components(mask: &Mask, connectivity: Connectivity) -> (Vec<u32>, u32) {
    let (w, h) = mask.dims();
    let idx = |x: u32, y: u32| y as usize * w as usize + x as usize;
    let mut labels = vec![0u32; w as usize * h as usize];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbours[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(labels[idx(x - 1, y)]);
            }
            if y > 0 {
                push(labels[idx(x, y - 1)]);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(labels[idx(x - 1, y - 1)]);
                    }
                    if x + 1 < w {
                        push(labels[idx(x + 1, y - 1)]);
                    }
                }
            }
            let label = match neighbours[..n].iter().min() {
                None => sets.make(),
                Some(&m) => {
                    for &l in &neighbours[..n] {
                        sets.union(m, l);
                    }
                    m
                }
            };
            labels[idx(x, y)] = label;
        }
    }

    let mut remap = vec![0u32; sets.parent.len()];
    let mut count = 0;
    for l in labels.iter_mut().filter(|l| **l != 0) {
        let root = sets.find(*l) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        *l = remap[root];
    }
    (labels, count)
}

/// One pseudo-instance per connected component of each promoted class
/// whose area reaches `min_area`. Ordered by class id, then component
/// raster-scan order.
pub fn extract_pseudo_instances(
    tile: &Tile,
    promote: &BTreeSet<String>,
    min_area: u64,
    connectivity: Connectivity,
) -> Vec<PseudoInstance> {
    let Some(sem) = &tile.semantic else {
        return Vec::new();
    };
    let (w, h) = sem.raster.dimensions();
    let mut out = Vec::new();
    for class in sem.classes_present() {
        let Some(name) = sem.legend.name(class) else { continue };
        if !promote.iter().any(|p| p.eq_ignore_ascii_case(name)) {
            continue;
        }
        let (labels, count) = label_components(&sem.class_mask(class), connectivity);
        let mut areas = vec![0u64; count as usize + 1];
        for &l in &labels {
            areas[l as usize] += 1;
        }
        for comp in 1..=count {
            if areas[comp as usize] < min_area {
                continue;
            }
            let mask = Mask::from_vec(w, h, labels.iter().map(|&l| l == comp).collect()).expect("dims match");
            out.push(PseudoInstance {
                class,
                class_name: name.to_string(),
                mask,
                area: areas[comp as usize],
            });
        }
    }
    out
}

/// Replaces the tile's instance list with its pseudo-instances.
pub fn promote_pseudo_instances(tile: &mut Tile, promote: &BTreeSet<String>, min_area: u64, connectivity: Connectivity) {
    tile.instances = extract_pseudo_instances(tile, promote, min_area, connectivity)
        .into_iter()
        .enumerate()
        .map(|(i, p)| InstanceAnnotation {
            id: i as u64 + 1,
            category: p.class_name,
            mask: p.mask,
        })
        .collect();
}
