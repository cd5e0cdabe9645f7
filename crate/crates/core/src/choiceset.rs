//! Route choice sets: observed routes supplemented by loopless k-shortest
//! paths, screened with length-weighted Jaccard similarity.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{EdgeId, NodeId, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathWeight {
    #[default]
    Duration,
    Length,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub edges: Vec<EdgeId>,
    /// Per-edge lengths in meters, parallel to `edges`.
    pub lengths: Vec<f64>,
    pub length: f64,
    pub duration: f64,
    pub origin: NodeId,
    pub destination: NodeId,
}

impl Route {
    /// Requires every edge to carry a speed.
    pub fn from_edges(net: &RoadNetwork, edges: Vec<EdgeId>) -> Result<Route> {
        let idx = net.route_indices(&edges)?;
        let mut lengths = Vec::with_capacity(idx.len());
        let mut duration = 0.0;
        for &i in &idx {
            let e = net.edge_at(i);
            lengths.push(e.length);
            duration += e.duration().ok_or(Error::MissingSpeed(e.id))?;
        }
        Ok(Route {
            origin: net.node_at(net.tail_idx(idx[0])).id,
            destination: net.node_at(net.head_idx(*idx.last().unwrap())).id,
            length: lengths.iter().sum(),
            lengths,
            duration,
            edges,
        })
    }

    /// Node sequence from origin to destination.
    pub fn nodes(&self, net: &RoadNetwork) -> Result<Vec<NodeId>> {
        let idx = net.route_indices(&self.edges)?;
        let mut out = vec![net.node_at(net.tail_idx(idx[0])).id];
        out.extend(idx.iter().map(|&i| net.node_at(net.head_idx(i)).id));
        Ok(out)
    }

    fn edge_lengths(&self) -> BTreeMap<EdgeId, f64> {
        self.edges.iter().copied().zip(self.lengths.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Observed,
    Synthesized,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationMeta {
    /// departure time, seconds
    pub depart: Option<f64>,
    pub occupied: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceSet {
    pub od: (NodeId, NodeId),
    pub routes: Vec<Route>,
    pub chosen: usize,
    pub provenance: Vec<Provenance>,
    /// Observed trips absorbed by each route (0 for synthesized routes).
    pub multiplicity: Vec<u32>,
    #[serde(default)]
    pub meta: ObservationMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChoiceSetOptions {
    pub min_size: usize,
    pub threshold: f64,
    pub k_cap: usize,
    pub weight: PathWeight,
}

impl Default for ChoiceSetOptions {
    fn default() -> Self {
        ChoiceSetOptions {
            min_size: 5,
            threshold: 0.4,
            k_cap: 50,
            weight: PathWeight::Duration,
        }
    }
}

fn edge_weights(net: &RoadNetwork, weight: PathWeight) -> Result<Vec<f64>> {
    net.edges()
        .iter()
        .map(|e| match weight {
            PathWeight::Length => Ok(e.length),
            PathWeight::Duration => e.duration().ok_or(Error::MissingSpeed(e.id)),
        })
        .collect()
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path as edge indices, avoiding banned nodes and edges.
fn dijkstra(
    net: &RoadNetwork,
    w: &[f64],
    source: usize,
    target: usize,
    banned_nodes: &[bool],
    banned_edges: &[bool],
) -> Option<Vec<usize>> {
    let n = net.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier(0.0, source));
    while let Some(Frontier(d, v)) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        if v == target {
            break;
        }
        for &e in net.out_edges(v) {
            if banned_edges[e] {
                continue;
            }
            let h = net.head_idx(e);
            if banned_nodes[h] || done[h] {
                continue;
            }
            let nd = d + w[e];
            if nd < dist[h] {
                dist[h] = nd;
                via[h] = Some(e);
                heap.push(Frontier(nd, h));
            }
        }
    }
    if !done[target] {
        return None;
    }
    let mut path = Vec::new();
    let mut v = target;
    while v != source {
        let e = via[v]?;
        path.push(e);
        v = net.tail_idx(e);
    }
    path.reverse();
    Some(path)
}

fn path_cost(w: &[f64], path: &[usize]) -> f64 {
    path.iter().map(|&e| w[e]).sum()
}

#[derive(PartialEq)]
struct Candidate {
    cost: f64,
    path: Vec<usize>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // min-heap on (cost, path)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy Yen enumeration of loopless paths in non-decreasing cost order.
pub struct KShortest<'a> {
    net: &'a RoadNetwork,
    w: Vec<f64>,
    source: usize,
    target: usize,
    accepted: Vec<Vec<usize>>,
    candidates: BinaryHeap<Candidate>,
    seen: BTreeSet<Vec<usize>>,
    first: Option<Vec<usize>>,
}

impl<'a> KShortest<'a> {
    pub fn new(net: &'a RoadNetwork, o: NodeId, d: NodeId, weight: PathWeight) -> Result<Self> {
        let source = net.node_idx(o).ok_or(Error::UnknownNode(o))?;
        let target = net.node_idx(d).ok_or(Error::UnknownNode(d))?;
        if source == target {
            return Err(Error::DegenerateOd(o));
        }
        let w = edge_weights(net, weight)?;
        let none_n = vec![false; net.node_count()];
        let none_e = vec![false; net.edge_count()];
        let first = dijkstra(net, &w, source, target, &none_n, &none_e).ok_or(Error::Unreachable { from: o, to: d })?;
        let mut seen = BTreeSet::new();
        seen.insert(first.clone());
        Ok(KShortest {
            net,
            w,
            source,
            target,
            accepted: Vec::new(),
            candidates: BinaryHeap::new(),
            seen,
            first: Some(first),
        })
    }

    fn spur_from_last(&mut self) {
        let net = self.net;
        let last = self.accepted.last().unwrap().clone();
        let mut root_nodes = vec![self.source];
        root_nodes.extend(last.iter().map(|&e| net.head_idx(e)));
        let mut banned_nodes = vec![false; net.node_count()];
        let mut banned_edges = vec![false; net.edge_count()];
        for i in 0..last.len() {
            let spur = root_nodes[i];
            let root = &last[..i];
            for p in &self.accepted {
                if p.len() > i && &p[..i] == root {
                    banned_edges[p[i]] = true;
                }
            }
            if let Some(spur_path) = dijkstra(net, &self.w, spur, self.target, &banned_nodes, &banned_edges) {
                let mut full = root.to_vec();
                full.extend(spur_path);
                if self.seen.insert(full.clone()) {
                    self.candidates.push(Candidate {
                        cost: path_cost(&self.w, &full),
                        path: full,
                    });
                }
            }
            banned_edges.iter_mut().for_each(|b| *b = false);
            banned_nodes[spur] = true;
        }
    }
}

impl Iterator for KShortest<'_> {
    /// (cost, edge indices)
    type Item = (f64, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let path = if let Some(first) = self.first.take() {
            first
        } else {
            if self.accepted.is_empty() {
                return None;
            }
            self.spur_from_last();
            self.candidates.pop()?.path
        };
        self.accepted.push(path.clone());
        Some((path_cost(&self.w, &path), path))
    }
}

fn to_route(net: &RoadNetwork, path: &[usize]) -> Result<Route> {
    Route::from_edges(net, path.iter().map(|&e| net.edge_at(e).id).collect())
}

/// Up to `k` loopless paths from `o` to `d` in non-decreasing order of the
/// chosen weight.
pub fn k_shortest(net: &RoadNetwork, o: NodeId, d: NodeId, k: usize, weight: PathWeight) -> Result<Vec<Route>> {
    KShortest::new(net, o, d, weight)?
        .take(k)
        .map(|(_, p)| to_route(net, &p))
        .collect()
}

/// Shared edge length over union edge length.
pub fn weighted_jaccard(a: &Route, b: &Route) -> f64 {
    let la = a.edge_lengths();
    let lb = b.edge_lengths();
    let mut shared = 0.0;
    let mut union = 0.0;
    for (e, l) in &la {
        union += l;
        if lb.contains_key(e) {
            shared += l;
        }
    }
    for (e, l) in &lb {
        if !la.contains_key(e) {
            union += l;
        }
    }
    if union == 0.0 {
        0.0
    } else {
        shared / union
    }
}

/// Build the choice set for one OD pair.
///
/// The chosen observed route enters first and is never screened. Other
/// observed routes join when they are dissimilar to every member, otherwise
/// they are merged into their most similar member (raising its multiplicity).
/// K-shortest candidates then join in order when dissimilar to every member
/// and are dropped otherwise, until `min_size` routes are present.
pub fn build_choice_set(
    net: &RoadNetwork,
    od: (NodeId, NodeId),
    observed: &[Route],
    chosen: usize,
    opts: &ChoiceSetOptions,
) -> Result<ChoiceSet> {
    if od.0 == od.1 {
        return Err(Error::DegenerateOd(od.0));
    }
    if chosen >= observed.len() {
        return Err(Error::InvalidInput(format!(
            "chosen index {chosen} out of range for {} observed routes",
            observed.len()
        )));
    }
    for r in observed {
        if (r.origin, r.destination) != od {
            return Err(Error::InvalidInput(format!(
                "observed route {}->{} does not serve OD {}->{}",
                r.origin, r.destination, od.0, od.1
            )));
        }
    }
    let mut set = ChoiceSet {
        od,
        routes: vec![observed[chosen].clone()],
        chosen: 0,
        provenance: vec![Provenance::Observed],
        multiplicity: vec![1],
        meta: ObservationMeta::default(),
    };
    let most_similar = |set: &ChoiceSet, r: &Route| {
        set.routes
            .iter()
            .enumerate()
            .map(|(i, m)| (i, weighted_jaccard(r, m)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
    };
    for (i, r) in observed.iter().enumerate() {
        if i == chosen {
            continue;
        }
        let (j, sim) = most_similar(&set, r);
        if sim >= opts.threshold {
            set.multiplicity[j] += 1;
        } else {
            set.routes.push(r.clone());
            set.provenance.push(Provenance::Observed);
            set.multiplicity.push(1);
        }
    }
    if set.routes.len() < opts.min_size {
        let ksp = KShortest::new(net, od.0, od.1, opts.weight)?;
        for (_, path) in ksp.take(opts.k_cap) {
            let cand = to_route(net, &path)?;
            let (_, sim) = most_similar(&set, &cand);
            if sim < opts.threshold {
                set.routes.push(cand);
                set.provenance.push(Provenance::Synthesized);
                set.multiplicity.push(0);
                if set.routes.len() >= opts.min_size {
                    break;
                }
            }
        }
    }
    if set.routes.len() < opts.min_size {
        return Err(Error::UndersizedChoiceSet {
            required: opts.min_size,
            partial: Box::new(set),
        });
    }
    Ok(set)
}

/// Group routes by OD in order of first appearance.
pub fn group_by_od(routes: Vec<Route>) -> Vec<((NodeId, NodeId), Vec<Route>)> {
    let mut order: Vec<((NodeId, NodeId), Vec<Route>)> = Vec::new();
    let mut slot: HashMap<(NodeId, NodeId), usize> = HashMap::new();
    for r in routes {
        let key = (r.origin, r.destination);
        match slot.get(&key) {
            Some(&i) => order[i].1.push(r),
            None => {
                slot.insert(key, order.len());
                order.push((key, vec![r]));
            }
        }
    }
    order
}
