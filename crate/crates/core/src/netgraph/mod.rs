//! Road network data model, buildings, POIs, trips and the hexagonal grid.

pub mod geometry;
pub mod hex;
pub mod io;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use geometry::Point;
pub use hex::{cells_along, CellId, HexGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub tail: NodeId,
    pub head: NodeId,
    /// meters
    pub length: f64,
    /// meters per second
    pub speed: Option<f64>,
    /// Optional polyline from tail to head; `None` means a straight segment.
    pub geometry: Option<Vec<Point>>,
}

impl Edge {
    /// Travel time in seconds, when a speed is known.
    pub fn duration(&self) -> Option<f64> {
        self.speed.map(|v| self.length / v)
    }
}

/// Directed road graph with node coordinates and edge attributes.
/// Immutable after construction; indices follow input order.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_index: HashMap<NodeId, usize>,
    edge_index: HashMap<EdgeId, usize>,
    tails: Vec<usize>,
    heads: Vec<usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

/// Equal when nodes and edges match in order; the indices are derived.
impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !n.pos.is_finite() {
                return Err(Error::InvalidInput(format!("node {} has non-finite coordinates", n.id)));
            }
            if node_index.insert(n.id, i).is_some() {
                return Err(Error::DuplicateId(format!("node {}", n.id)));
            }
        }
        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut tails = Vec::with_capacity(edges.len());
        let mut heads = Vec::with_capacity(edges.len());
        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id, i).is_some() {
                return Err(Error::DuplicateId(format!("edge {}", e.id)));
            }
            let t = *node_index.get(&e.tail).ok_or(Error::DanglingEndpoint {
                edge: e.id,
                node: e.tail,
            })?;
            let h = *node_index.get(&e.head).ok_or(Error::DanglingEndpoint {
                edge: e.id,
                node: e.head,
            })?;
            if !(e.length > 0.0 && e.length.is_finite()) {
                return Err(Error::NonpositiveLength {
                    edge: e.id,
                    length: e.length,
                });
            }
            if let Some(v) = e.speed {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidInput(format!("edge {} has invalid speed {v}", e.id)));
                }
            }
            if let Some(g) = &e.geometry {
                if g.len() < 2 || g.iter().any(|p| !p.is_finite()) {
                    return Err(Error::InvalidInput(format!("edge {} has invalid geometry", e.id)));
                }
            }
            tails.push(t);
            heads.push(h);
            out_edges[t].push(i);
            in_edges[h].push(i);
        }
        Ok(RoadNetwork {
            nodes,
            edges,
            node_index,
            edge_index,
            tails,
            heads,
            out_edges,
            in_edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_idx(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn edge_idx(&self, id: EdgeId) -> Option<usize> {
        self.edge_index.get(&id).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.node_idx(id).map(|i| &self.nodes[i])
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edge_idx(id).map(|i| &self.edges[i])
    }

    pub fn node_at(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn edge_at(&self, i: usize) -> &Edge {
        &self.edges[i]
    }

    pub fn tail_idx(&self, edge: usize) -> usize {
        self.tails[edge]
    }

    pub fn head_idx(&self, edge: usize) -> usize {
        self.heads[edge]
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    /// Edge polyline including both endpoints.
    pub fn polyline_at(&self, edge: usize) -> Vec<Point> {
        match &self.edges[edge].geometry {
            Some(g) => g.clone(),
            None => vec![
                self.nodes[self.tails[edge]].pos,
                self.nodes[self.heads[edge]].pos,
            ],
        }
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Resolve a route to edge indices, checking head-to-tail connectivity.
    pub fn route_indices(&self, route: &[EdgeId]) -> Result<Vec<usize>> {
        if route.is_empty() {
            return Err(Error::EmptyRoute);
        }
        let idx = route
            .iter()
            .map(|&e| self.edge_idx(e).ok_or(Error::UnknownEdge(e)))
            .collect::<Result<Vec<_>>>()?;
        for (k, w) in idx.windows(2).enumerate() {
            if self.heads[w[0]] != self.tails[w[1]] {
                return Err(Error::DisconnectedRoute { at: k });
            }
        }
        Ok(idx)
    }

    pub fn route_length(&self, route: &[EdgeId]) -> Result<f64> {
        Ok(self
            .route_indices(route)?
            .iter()
            .map(|&i| self.edges[i].length)
            .sum())
    }

    pub fn route_duration(&self, route: &[EdgeId]) -> Result<f64> {
        let mut total = 0.0;
        for i in self.route_indices(route)? {
            let e = &self.edges[i];
            total += e.duration().ok_or(Error::MissingSpeed(e.id))?;
        }
        Ok(total)
    }

    /// Copy of this network with speeds replaced from `speeds`; edges absent
    /// from the map keep their current speed. Speeds below `floor` are raised
    /// to it so every duration stays finite.
    pub fn with_speeds(&self, speeds: &BTreeMap<EdgeId, f64>, floor: f64) -> Result<RoadNetwork> {
        let mut edges = self.edges.clone();
        for e in &mut edges {
            if let Some(&v) = speeds.get(&e.id) {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidSample { edge: e.id, speed: v });
                }
                e.speed = Some(v.max(floor));
            }
        }
        RoadNetwork::new(self.nodes.clone(), edges)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    /// Counter-clockwise ring without a repeated closing vertex.
    pub footprint: Vec<Point>,
    pub area: f64,
    pub perimeter: f64,
    pub floors: u32,
    pub height: Option<f64>,
}

impl Building {
    pub fn new(footprint: Vec<Point>, floors: u32, height: Option<f64>) -> Result<Self> {
        let mut ring = footprint;
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 || ring.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidBuilding("footprint needs at least 3 finite vertices".into()));
        }
        if !geometry::ring_is_simple(&ring) {
            return Err(Error::InvalidBuilding("footprint is not a simple polygon".into()));
        }
        if floors < 1 {
            return Err(Error::InvalidBuilding("floors must be at least 1".into()));
        }
        if let Some(h) = height {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::InvalidBuilding(format!("invalid height {h}")));
            }
        }
        let signed = geometry::signed_area(&ring);
        if signed == 0.0 {
            return Err(Error::InvalidBuilding("footprint has zero area".into()));
        }
        if signed < 0.0 {
            ring.reverse();
        }
        let area = signed.abs();
        let perimeter = geometry::ring_perimeter(&ring);
        Ok(Building {
            footprint: ring,
            area,
            perimeter,
            floors,
            height,
        })
    }

    pub fn centroid(&self) -> Point {
        geometry::ring_centroid(&self.footprint)
    }

    pub fn effective_height(&self, floor_height: f64) -> f64 {
        self.height.unwrap_or(self.floors as f64 * floor_height)
    }

    /// Isoperimetric quotient 4πA/P².
    pub fn compactness(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.area / (self.perimeter * self.perimeter)
    }

    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.footprint {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }
}

/// Closed set of POI land-use categories, with an optional crosswalk from
/// raw source labels to declared categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySet {
    names: Vec<String>,
    #[serde(default)]
    mapping: BTreeMap<String, String>,
}

impl Default for CategorySet {
    fn default() -> Self {
        CategorySet::new(
            ["residential", "commercial", "transportation", "industrial", "public", "parks"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .expect("default categories are valid")
    }
}

impl CategorySet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidInput("category set is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateId(format!("category {n}")));
            }
        }
        Ok(CategorySet {
            names,
            mapping: BTreeMap::new(),
        })
    }

    pub fn with_mapping(mut self, mapping: BTreeMap<String, String>) -> Result<Self> {
        for target in mapping.values() {
            if !self.names.contains(target) {
                return Err(Error::UnknownCategory(target.clone()));
            }
        }
        self.mapping = mapping;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn resolve(&self, label: &str) -> Result<usize> {
        let label = self.mapping.get(label).map(String::as_str).unwrap_or(label);
        self.names
            .iter()
            .position(|n| n == label)
            .ok_or_else(|| Error::UnknownCategory(label.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poi {
    pub location: Point,
    /// Index into the declared [`CategorySet`].
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub edges: Vec<EdgeId>,
    /// seconds; time of day is taken modulo one day
    pub depart: f64,
    pub occupied: bool,
    pub speed_samples: Vec<(EdgeId, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripBounds {
    pub min_duration: f64,
    pub max_duration: f64,
    pub min_length: f64,
    pub max_length: f64,
}

impl Default for TripBounds {
    fn default() -> Self {
        TripBounds {
            min_duration: 300.0,
            max_duration: 18_000.0,
            min_length: 1_000.0,
            max_length: 50_000.0,
        }
    }
}

/// Keep trips whose total duration and length fall inside the bounds
/// (inclusive). Durations come from the network's edge speeds.
pub fn filter_trips(trips: &[Trip], net: &RoadNetwork, bounds: &TripBounds) -> Result<Vec<Trip>> {
    let mut kept = Vec::new();
    for t in trips {
        let length = net.route_length(&t.edges)?;
        let duration = net.route_duration(&t.edges)?;
        if (bounds.min_duration..=bounds.max_duration).contains(&duration)
            && (bounds.min_length..=bounds.max_length).contains(&length)
        {
            kept.push(t.clone());
        }
    }
    Ok(kept)
}
