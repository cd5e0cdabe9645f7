use std::collections::BTreeMap;

use crate::netgraph::geometry::point_along;
use crate::netgraph::{CellId, HexGrid, Poi, RoadNetwork};

/// Cell of each edge, by the midpoint of its polyline.
fn edge_cells(net: &RoadNetwork, grid: &HexGrid) -> Vec<CellId> {
    (0..net.edge_count())
        .map(|i| grid.hex_of(&point_along(&net.polyline_at(i), 0.5)))
        .collect()
}

/// Mean edge length per cell.
pub fn avg_road_length(net: &RoadNetwork, grid: &HexGrid) -> BTreeMap<CellId, f64> {
    let mut acc: BTreeMap<CellId, (f64, usize)> = BTreeMap::new();
    for (e, c) in net.edges().iter().zip(edge_cells(net, grid)) {
        let slot = acc.entry(c).or_default();
        slot.0 += e.length;
        slot.1 += 1;
    }
    acc.into_iter().map(|(c, (l, n))| (c, l / n as f64)).collect()
}

/// Σ real length / Σ endpoint chord per cell. Loop edges (zero chord)
/// are left out of both sums.
pub fn circuity(net: &RoadNetwork, grid: &HexGrid) -> BTreeMap<CellId, f64> {
    let mut acc: BTreeMap<CellId, (f64, f64)> = BTreeMap::new();
    for (i, c) in edge_cells(net, grid).into_iter().enumerate() {
        let chord = net
            .node_at(net.tail_idx(i))
            .pos
            .dist(&net.node_at(net.head_idx(i)).pos);
        if chord <= 0.0 {
            continue;
        }
        let slot = acc.entry(c).or_default();
        slot.0 += net.edge_at(i).length;
        slot.1 += chord;
    }
    acc.into_iter().map(|(c, (real, short))| (c, real / short)).collect()
}

/// Edges per node in each cell; cells without nodes are absent.
pub fn connectivity(net: &RoadNetwork, grid: &HexGrid) -> BTreeMap<CellId, f64> {
    let mut nodes: BTreeMap<CellId, usize> = BTreeMap::new();
    for n in net.nodes() {
        *nodes.entry(grid.hex_of(&n.pos)).or_default() += 1;
    }
    let mut edges: BTreeMap<CellId, usize> = BTreeMap::new();
    for c in edge_cells(net, grid) {
        *edges.entry(c).or_default() += 1;
    }
    nodes
        .into_iter()
        .map(|(c, n)| (c, *edges.get(&c).unwrap_or(&0) as f64 / n as f64))
        .collect()
}

fn category_shares(pois: &[Poi], grid: &HexGrid, n_categories: usize) -> BTreeMap<CellId, Vec<f64>> {
    let mut counts: BTreeMap<CellId, Vec<usize>> = BTreeMap::new();
    for p in pois {
        counts
            .entry(grid.hex_of(&p.location))
            .or_insert_with(|| vec![0; n_categories])[p.category] += 1;
    }
    counts
        .into_iter()
        .map(|(c, v)| {
            let total: usize = v.iter().sum();
            (c, v.iter().map(|&k| k as f64 / total as f64).collect())
        })
        .collect()
}

pub(crate) fn simpson_index(shares: &[f64]) -> f64 {
    1.0 - shares.iter().map(|p| p * p).sum::<f64>()
}

pub(crate) fn shannon_index(shares: &[f64]) -> f64 {
    -shares
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// 1 − Σ pᵢ² over POI category shares in each cell.
pub fn simpson(pois: &[Poi], grid: &HexGrid, n_categories: usize) -> BTreeMap<CellId, f64> {
    category_shares(pois, grid, n_categories)
        .into_iter()
        .map(|(c, s)| (c, simpson_index(&s)))
        .collect()
}

/// −Σ pᵢ ln pᵢ over POI category shares in each cell.
pub fn shannon(pois: &[Poi], grid: &HexGrid, n_categories: usize) -> BTreeMap<CellId, f64> {
    category_shares(pois, grid, n_categories)
        .into_iter()
        .map(|(c, s)| (c, shannon_index(&s)))
        .collect()
}
