use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::netgraph::geometry::{clip_to_convex, point_in_ring, ray_hit_distance, signed_area};
use crate::netgraph::{Building, CellId, HexGrid, NodeId, Point, RoadNetwork};

/// Footprint area of `b` inside each cell it overlaps.
pub(crate) fn clipped_areas(b: &Building, grid: &HexGrid) -> Vec<(CellId, f64)> {
    let start = grid.hex_of(&b.footprint[0]);
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut out = Vec::new();
    while let Some(c) = queue.pop_front() {
        let clipped = clip_to_convex(&b.footprint, &grid.corners(c));
        let a = signed_area(&clipped).abs();
        if a <= 0.0 {
            continue;
        }
        out.push((c, a));
        for n in c.neighbors() {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    out.sort_by_key(|&(c, _)| c);
    out
}

fn clipped_sum(buildings: &[Building], grid: &HexGrid, weight: impl Fn(&Building) -> f64) -> BTreeMap<CellId, f64> {
    let mut acc: BTreeMap<CellId, f64> = BTreeMap::new();
    for b in buildings {
        let w = weight(b);
        for (c, a) in clipped_areas(b, grid) {
            *acc.entry(c).or_default() += a * w;
        }
    }
    let s = grid.cell_area();
    acc.into_iter().map(|(c, v)| (c, v / s)).collect()
}

/// Built footprint area inside each cell over the cell area.
pub fn building_density(buildings: &[Building], grid: &HexGrid) -> BTreeMap<CellId, f64> {
    clipped_sum(buildings, grid, |_| 1.0)
}

/// Σ footprint area × floors inside each cell over the cell area.
pub fn floor_area_ratio(buildings: &[Building], grid: &HexGrid) -> BTreeMap<CellId, f64> {
    clipped_sum(buildings, grid, |b| b.floors as f64)
}

/// Mean isoperimetric quotient of the buildings whose centroid is in each cell.
pub fn compactness(buildings: &[Building], grid: &HexGrid) -> BTreeMap<CellId, f64> {
    let mut acc: BTreeMap<CellId, (f64, usize)> = BTreeMap::new();
    for b in buildings {
        let slot = acc.entry(grid.hex_of(&b.centroid())).or_default();
        slot.0 += b.compactness();
        slot.1 += 1;
    }
    acc.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkyViewParams {
    /// number of equal azimuth sectors
    pub sectors: usize,
    /// search radius, meters
    pub radius: f64,
    /// meters per floor when a building has no height
    pub floor_height: f64,
}

impl Default for SkyViewParams {
    fn default() -> Self {
        SkyViewParams {
            sectors: 16,
            radius: 100.0,
            floor_height: 3.0,
        }
    }
}

/// Uniform bucket index over building bounding boxes.
struct BuildingIndex {
    size: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl BuildingIndex {
    fn new(buildings: &[Building], size: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, b) in buildings.iter().enumerate() {
            let (lo, hi) = b.bbox();
            for bx in (lo.x / size).floor() as i64..=(hi.x / size).floor() as i64 {
                for by in (lo.y / size).floor() as i64..=(hi.y / size).floor() as i64 {
                    buckets.entry((bx, by)).or_default().push(i);
                }
            }
        }
        BuildingIndex { size, buckets }
    }

    fn near(&self, p: &Point, r: f64) -> Vec<usize> {
        let mut out = BTreeSet::new();
        for bx in ((p.x - r) / self.size).floor() as i64..=((p.x + r) / self.size).floor() as i64 {
            for by in ((p.y - r) / self.size).floor() as i64..=((p.y + r) / self.size).floor() as i64 {
                if let Some(v) = self.buckets.get(&(bx, by)) {
                    out.extend(v.iter().copied());
                }
            }
        }
        out.into_iter().collect()
    }
}

/// Sky view factor at a point: 1 − mean over sectors of sin²β, where β is
/// the largest elevation angle to a building hit by the sector's central
/// ray within the search radius. A point inside a footprint sees no sky.
pub fn sky_view_at(p: &Point, buildings: &[&Building], params: &SkyViewParams) -> f64 {
    if buildings.iter().any(|b| point_in_ring(p, &b.footprint)) {
        return 0.0;
    }
    let nd = params.sectors.max(1);
    let mut acc = 0.0;
    for k in 0..nd {
        let az = (k as f64 + 0.5) * std::f64::consts::TAU / nd as f64;
        let mut beta: f64 = 0.0;
        for b in buildings {
            if let Some(d) = ray_hit_distance(p, az, &b.footprint, params.radius) {
                let h = b.effective_height(params.floor_height);
                let angle = if d == 0.0 { std::f64::consts::FRAC_PI_2 } else { h.atan2(d) };
                beta = beta.max(angle);
            }
        }
        let s = beta.sin();
        acc += s * s;
    }
    1.0 - acc / nd as f64
}

pub fn sky_view_factor(buildings: &[Building], net: &RoadNetwork, params: &SkyViewParams) -> BTreeMap<NodeId, f64> {
    let index = BuildingIndex::new(buildings, params.radius.max(1.0));
    net.nodes()
        .iter()
        .map(|n| {
            let near: Vec<&Building> = index
                .near(&n.pos, params.radius)
                .into_iter()
                .map(|i| &buildings[i])
                .collect();
            (n.id, sky_view_at(&n.pos, &near, params))
        })
        .collect()
}
