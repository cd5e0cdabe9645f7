//! Length-weighted node centralities on the directed network.
//!
//! Parallel edges collapse to their shortest member and self-loops are
//! ignored, so shortest paths are node sequences.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netgraph::{NodeId, RoadNetwork};

const SOURCE_CHUNK: usize = 32;

pub(crate) struct NodeGraph {
    pub(crate) adj: Vec<Vec<(usize, f64)>>,
}

impl NodeGraph {
    pub(crate) fn from_network(net: &RoadNetwork) -> Self {
        let mut best: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); net.node_count()];
        for (i, e) in net.edges().iter().enumerate() {
            let (t, h) = (net.tail_idx(i), net.head_idx(i));
            if t == h {
                continue;
            }
            let slot = best[t].entry(h).or_insert(e.length);
            if e.length < *slot {
                *slot = e.length;
            }
        }
        NodeGraph {
            adj: best.into_iter().map(|m| m.into_iter().collect()).collect(),
        }
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Two path lengths are considered equal within a relative 1e-12.
pub(crate) fn same_length(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

pub(crate) struct Sssp {
    pub(crate) dist: Vec<f64>,
    pub(crate) sigma: Vec<f64>,
    pub(crate) preds: Vec<Vec<usize>>,
    /// Nodes in non-decreasing distance order.
    pub(crate) order: Vec<usize>,
}

pub(crate) fn sssp(g: &NodeGraph, s: usize) -> Sssp {
    let n = g.adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0; n];
    let mut preds = vec![Vec::new(); n];
    let mut settled = vec![false; n];
    let mut order = Vec::new();
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    sigma[s] = 1.0;
    heap.push(HeapItem(0.0, s));
    while let Some(HeapItem(_, v)) = heap.pop() {
        if settled[v] {
            continue;
        }
        settled[v] = true;
        order.push(v);
        for &(w, len) in &g.adj[v] {
            if settled[w] {
                continue;
            }
            let nd = dist[v] + len;
            if dist[w].is_infinite() || (nd < dist[w] && !same_length(nd, dist[w])) {
                dist[w] = nd;
                sigma[w] = sigma[v];
                preds[w].clear();
                preds[w].push(v);
                heap.push(HeapItem(nd, w));
            } else if same_length(nd, dist[w]) {
                sigma[w] += sigma[v];
                preds[w].push(v);
            }
        }
    }
    Sssp {
        dist,
        sigma,
        preds,
        order,
    }
}

fn per_source<T: Send>(net: &RoadNetwork, f: impl Fn(&Sssp, usize) -> T + Sync) -> Vec<T> {
    let g = NodeGraph::from_network(net);
    (0..net.node_count())
        .into_par_iter()
        .map(|s| f(&sssp(&g, s), s))
        .collect()
}

fn keyed(net: &RoadNetwork, values: Vec<f64>) -> BTreeMap<NodeId, f64> {
    net.nodes().iter().zip(values).map(|(n, v)| (n.id, v)).collect()
}

/// Largest finite shortest-path distance from each node; unreachable
/// nodes are excluded.
pub fn eccentricity(net: &RoadNetwork) -> Result<BTreeMap<NodeId, f64>> {
    if net.node_count() == 0 {
        return Err(Error::EmptyNetwork);
    }
    let vals = per_source(net, |sp, _| {
        sp.order.iter().map(|&v| sp.dist[v]).fold(0.0, f64::max)
    });
    Ok(keyed(net, vals))
}

/// (g − 1) / Σ dist over the g nodes reachable from each node (itself
/// included); 0 when nothing else is reachable.
pub fn closeness(net: &RoadNetwork) -> BTreeMap<NodeId, f64> {
    let vals = per_source(net, |sp, _| {
        let g = sp.order.len();
        let total: f64 = sp.order.iter().map(|&v| sp.dist[v]).sum();
        if g <= 1 || total == 0.0 {
            0.0
        } else {
            (g - 1) as f64 / total
        }
    });
    keyed(net, vals)
}

/// Distinct undirected neighbours over (n − 1).
pub fn degree_centrality(net: &RoadNetwork) -> BTreeMap<NodeId, f64> {
    let n = net.node_count();
    let mut nbrs: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); n];
    for i in 0..net.edge_count() {
        let (t, h) = (net.tail_idx(i), net.head_idx(i));
        if t != h {
            nbrs[t].insert(h);
            nbrs[h].insert(t);
        }
    }
    let denom = n.saturating_sub(1) as f64;
    let vals = nbrs
        .iter()
        .map(|s| if denom == 0.0 { 0.0 } else { s.len() as f64 / denom })
        .collect();
    keyed(net, vals)
}

/// Directed, length-weighted betweenness with fractional counting of tied
/// shortest paths over ordered pairs (Brandes accumulation).
pub fn betweenness(net: &RoadNetwork) -> BTreeMap<NodeId, f64> {
    let n = net.node_count();
    let g = NodeGraph::from_network(net);
    let sources: Vec<usize> = (0..n).collect();
    // fixed chunking keeps the floating-point summation order independent
    // of the thread count
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(SOURCE_CHUNK)
        .map(|chunk| {
            let mut bc = vec![0.0; n];
            let mut delta = vec![0.0; n];
            for &s in chunk {
                let sp = sssp(&g, s);
                for &v in &sp.order {
                    delta[v] = 0.0;
                }
                for &w in sp.order.iter().rev() {
                    let coeff = (1.0 + delta[w]) / sp.sigma[w];
                    for &v in &sp.preds[w] {
                        delta[v] += sp.sigma[v] * coeff;
                    }
                    if w != s {
                        bc[w] += delta[w];
                    }
                }
            }
            bc
        })
        .collect();
    let mut total = vec![0.0; n];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    keyed(net, total)
}
