use serde::{Deserialize, Serialize};

use crate::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridCell {
    TopLeft,
    TopCenter,
    TopRight,
    CenterLeft,
    Center,
    CenterRight,
    BottomLeft,
    BottomCenter,
    BottomRight,
}

impl GridCell {
    const CELLS: [[GridCell; 3]; 3] = [
        [GridCell::TopLeft, GridCell::TopCenter, GridCell::TopRight],
        [GridCell::CenterLeft, GridCell::Center, GridCell::CenterRight],
        [GridCell::BottomLeft, GridCell::BottomCenter, GridCell::BottomRight],
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GridCell::TopLeft => "top-left",
            GridCell::TopCenter => "top-center",
            GridCell::TopRight => "top-right",
            GridCell::CenterLeft => "center-left",
            GridCell::Center => "center",
            GridCell::CenterRight => "center-right",
            GridCell::BottomLeft => "bottom-left",
            GridCell::BottomCenter => "bottom-center",
            GridCell::BottomRight => "bottom-right",
        }
    }
}

fn third(coord: f64, tile_size: u32) -> usize {
    let cell = tile_size as f64 / 3.0;
    if coord < cell {
        0
    } else if coord < 2.0 * cell {
        1
    } else {
        2
    }
}

/// 3×3 grid cell holding a point; bins are left-closed except the last.
pub fn grid_cell_of(center: (f64, f64), tile_size: u32) -> GridCell {
    GridCell::CELLS[third(center.1, tile_size)][third(center.0, tile_size)]
}

/// Grid cell of the bounding-box center.
pub fn grid_position(bbox: &BBox, tile_size: u32) -> GridCell {
    grid_cell_of(bbox.center(), tile_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremeFlag {
    Topmost,
    Bottommost,
    Leftmost,
    Rightmost,
}

impl ExtremeFlag {
    pub const ALL: [ExtremeFlag; 4] = [
        ExtremeFlag::Topmost,
        ExtremeFlag::Bottommost,
        ExtremeFlag::Leftmost,
        ExtremeFlag::Rightmost,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExtremeFlag::Topmost => "topmost",
            ExtremeFlag::Bottommost => "bottommost",
            ExtremeFlag::Leftmost => "leftmost",
            ExtremeFlag::Rightmost => "rightmost",
        }
    }
}

/// Per-instance extreme flags among same-category centers. Needs at least
/// two instances; a direction whose extremum is shared by several centers
/// flags nobody.
pub fn extreme_flags(centers: &[(f64, f64)]) -> Vec<Vec<ExtremeFlag>> {
    let mut flags = vec![Vec::new(); centers.len()];
    if centers.len() < 2 {
        return flags;
    }
    for flag in ExtremeFlag::ALL {
        let key = |c: &(f64, f64)| match flag {
            ExtremeFlag::Topmost => c.1,
            ExtremeFlag::Bottommost => -c.1,
            ExtremeFlag::Leftmost => c.0,
            ExtremeFlag::Rightmost => -c.0,
        };
        let best = centers.iter().map(key).fold(f64::INFINITY, f64::min);
        let winners: Vec<usize> = (0..centers.len()).filter(|&i| key(&centers[i]) == best).collect();
        if let [only] = winners[..] {
            flags[only].push(flag);
        }
    }
    flags
}

/// Eight compass directions in image space, counter-clockwise from +x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Right,
    TopRight,
    Top,
    TopLeft,
    Left,
    BottomLeft,
    Bottom,
    BottomRight,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::Right,
        Direction::TopRight,
        Direction::Top,
        Direction::TopLeft,
        Direction::Left,
        Direction::BottomLeft,
        Direction::Bottom,
        Direction::BottomRight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Right => "right",
            Direction::TopRight => "top-right",
            Direction::Top => "top",
            Direction::TopLeft => "top-left",
            Direction::Left => "left",
            Direction::BottomLeft => "bottom-left",
            Direction::Bottom => "bottom",
            Direction::BottomRight => "bottom-right",
        }
    }

    /// Sector of an angle in degrees (counter-clockwise, y up). Each sector
    /// spans [d − 22.5°, d + 22.5°), so an exact boundary falls to the
    /// counter-clockwise neighbour.
    pub fn from_angle(degrees: f64) -> Direction {
        let a = (degrees + 22.5).rem_euclid(360.0);
        Direction::ALL[((a / 45.0).floor() as usize) % 8]
    }

    /// Direction in which `subject` lies as seen from `from`, in image
    /// coordinates (y grows downward). `None` for coincident points.
    pub fn between(subject: (f64, f64), from: (f64, f64)) -> Option<Direction> {
        let dx = subject.0 - from.0;
        let dy_up = from.1 - subject.1;
        if dx == 0.0 && dy_up == 0.0 {
            return None;
        }
        Some(Direction::from_angle(dy_up.atan2(dx).to_degrees()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub direction: Direction,
    pub neighbor: String,
    pub neighbor_category: String,
}

/// A relation landmark: target id, center and category.
#[derive(Debug, Clone)]
pub struct Landmark<'a> {
    pub id: &'a str,
    pub center: (f64, f64),
    pub category: &'a str,
}

/// Relations of `subject` to every landmark whose center lies within
/// `max_dist`: the direction is where the subject sits relative to the
/// landmark ("to the right of a plane").
pub fn directional_relations(subject: (f64, f64), others: &[Landmark<'_>], max_dist: f64) -> Vec<Relation> {
    others
        .iter()
        .filter_map(|o| {
            let d = ((subject.0 - o.center.0).powi(2) + (subject.1 - o.center.1).powi(2)).sqrt();
            if d > max_dist {
                return None;
            }
            Direction::between(subject, o.center).map(|direction| Relation {
                direction,
                neighbor: o.id.to_string(),
                neighbor_category: o.category.to_string(),
            })
        })
        .collect()
}
