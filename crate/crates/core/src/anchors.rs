//! Anchor regions: Louvain communities of the undirected, unweighted road
//! graph, with every edge assigned to exactly one anchor.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{EdgeId, NodeId, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorId(pub u32);

impl std::fmt::Display for AnchorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LouvainOptions {
    pub resolution: f64,
    pub seed: u64,
}

impl Default for LouvainOptions {
    fn default() -> Self {
        LouvainOptions {
            resolution: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPartition {
    pub node_to_anchor: BTreeMap<NodeId, AnchorId>,
    pub edge_to_anchor: BTreeMap<EdgeId, AnchorId>,
    pub anchor_count: usize,
    pub modularity: f64,
    /// Modularity of the singleton start followed by one entry per outer
    /// (move + aggregate) iteration.
    pub history: Vec<f64>,
}

impl AnchorPartition {
    pub fn anchor_of_edge(&self, e: EdgeId) -> Result<AnchorId> {
        self.edge_to_anchor.get(&e).copied().ok_or(Error::UnknownEdge(e))
    }
}

/// Weighted undirected graph used inside Louvain. `self_w[u]` is the
/// weight of edges internal to super-node `u`, each counted once.
#[derive(Debug, Clone)]
struct WGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_w: Vec<f64>,
}

impl WGraph {
    fn degree(&self, u: usize) -> f64 {
        2.0 * self.self_w[u] + self.adj[u].iter().map(|&(_, w)| w).sum::<f64>()
    }

    fn total_weight(&self) -> f64 {
        (0..self.adj.len()).map(|u| self.degree(u)).sum::<f64>() / 2.0
    }
}

/// Undirected collapsed adjacency of the road network: each unordered
/// node pair joined by any edge gets weight 1; self-loops are dropped.
fn base_graph(net: &RoadNetwork) -> WGraph {
    let n = net.node_count();
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in 0..net.edge_count() {
        let (t, h) = (net.tail_idx(i), net.head_idx(i));
        if t != h {
            sets[t].insert(h);
            sets[h].insert(t);
        }
    }
    WGraph {
        adj: sets
            .into_iter()
            .map(|s| s.into_iter().map(|v| (v, 1.0)).collect())
            .collect(),
        self_w: vec![0.0; n],
    }
}

/// Modularity Σ_c [in_c/m − γ (tot_c / 2m)²] of `comm` on `g`.
fn modularity(g: &WGraph, comm: &[usize], resolution: f64) -> f64 {
    let m = g.total_weight();
    if m == 0.0 {
        return 0.0;
    }
    let k = comm.iter().copied().max().map_or(0, |c| c + 1);
    let mut inner = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for u in 0..g.adj.len() {
        let c = comm[u];
        inner[c] += g.self_w[u];
        tot[c] += g.degree(u);
        for &(v, w) in &g.adj[u] {
            if comm[v] == c && u < v {
                inner[c] += w;
            }
        }
    }
    (0..k)
        .map(|c| inner[c] / m - resolution * (tot[c] / (2.0 * m)).powi(2))
        .sum()
}

/// One local-moving phase. Returns community labels (dense, numbered by
/// first appearance in node order) and whether any node moved.
fn local_moves(g: &WGraph, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = g.adj.len();
    let m = g.total_weight();
    let mut comm: Vec<usize> = (0..n).collect();
    if m == 0.0 {
        return (comm, false);
    }
    let deg: Vec<f64> = (0..n).map(|u| g.degree(u)).collect();
    let mut tot = deg.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut links = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any_move = false;
    loop {
        let mut moved = false;
        for &u in &order {
            let cu = comm[u];
            for &(v, w) in &g.adj[u] {
                let c = comm[v];
                if links[c] == 0.0 && !touched.contains(&c) {
                    touched.push(c);
                }
                links[c] += w;
            }
            tot[cu] -= deg[u];
            let gain = |c: usize, links: &[f64]| links[c] - resolution * tot[c] * deg[u] / (2.0 * m);
            let stay = gain(cu, &links);
            let mut best = cu;
            let mut best_gain = stay;
            let mut candidates = touched.clone();
            candidates.sort_unstable();
            for &c in &candidates {
                if c == cu {
                    continue;
                }
                let gc = gain(c, &links);
                let tol = 1e-12 * gc.abs().max(best_gain.abs()).max(1.0);
                if gc > best_gain + tol || (best != cu && (gc - best_gain).abs() <= tol && c < best) {
                    best = c;
                    best_gain = gc;
                }
            }
            tot[best] += deg[u];
            if best != cu {
                comm[u] = best;
                moved = true;
                any_move = true;
            }
            for &c in &touched {
                links[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (relabel(&comm), any_move)
}

fn relabel(comm: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    let mut next = 0;
    comm.iter()
        .map(|&c| {
            *map.entry(c).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn aggregate(g: &WGraph, comm: &[usize]) -> WGraph {
    let k = comm.iter().copied().max().map_or(0, |c| c + 1);
    let mut self_w = vec![0.0; k];
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
    for u in 0..g.adj.len() {
        let cu = comm[u];
        self_w[cu] += g.self_w[u];
        for &(v, w) in &g.adj[u] {
            let cv = comm[v];
            if cu == cv {
                if u < v {
                    self_w[cu] += w;
                }
            } else {
                *adj[cu].entry(cv).or_default() += w;
            }
        }
    }
    WGraph {
        adj: adj.into_iter().map(|m| m.into_iter().collect()).collect(),
        self_w,
    }
}

/// Louvain community detection. Deterministic for a given seed: the node
/// visiting order of each level comes from a seeded shuffle and ties between
/// candidate communities go to the smallest community id.
pub fn louvain(net: &RoadNetwork, opts: &LouvainOptions) -> Result<AnchorPartition> {
    if net.node_count() == 0 {
        return Err(Error::EmptyNetwork);
    }
    if !(opts.resolution > 0.0 && opts.resolution.is_finite()) {
        return Err(Error::InvalidInput(format!("resolution must be positive, got {}", opts.resolution)));
    }
    let base = base_graph(net);
    let n = net.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut membership: Vec<usize> = (0..n).collect();
    let mut history = vec![modularity(&base, &membership, opts.resolution)];
    let mut g = base.clone();
    loop {
        let (comm, moved) = local_moves(&g, opts.resolution, &mut rng);
        if !moved {
            break;
        }
        for c in membership.iter_mut() {
            *c = comm[*c];
        }
        history.push(modularity(&base, &membership, opts.resolution));
        g = aggregate(&g, &comm);
    }
    let membership = relabel(&membership);
    let anchor_count = membership.iter().copied().max().map_or(0, |c| c + 1);
    let node_to_anchor = net
        .nodes()
        .iter()
        .zip(&membership)
        .map(|(nd, &c)| (nd.id, AnchorId(c as u32)))
        .collect();
    let partition = AnchorPartition {
        node_to_anchor,
        edge_to_anchor: BTreeMap::new(),
        anchor_count,
        modularity: *history.last().unwrap(),
        history,
    };
    assign_edges(partition, net)
}

/// Every edge joins the anchor of its tail node, which is also the shared
/// anchor of an intra-anchor edge.
pub fn assign_edges(mut partition: AnchorPartition, net: &RoadNetwork) -> Result<AnchorPartition> {
    let mut edges = BTreeMap::new();
    for e in net.edges() {
        let a = *partition
            .node_to_anchor
            .get(&e.tail)
            .ok_or(Error::UnknownNode(e.tail))?;
        edges.insert(e.id, a);
    }
    partition.edge_to_anchor = edges;
    Ok(partition)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorCohesion {
    pub anchor: AnchorId,
    pub node_count: usize,
    pub edge_count: usize,
    pub components: usize,
    pub cohesive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohesionReport {
    pub anchors: Vec<AnchorCohesion>,
    pub violations: Vec<AnchorId>,
}

/// Connectivity of each anchor's induced undirected subgraph.
pub fn cohesion_report(partition: &AnchorPartition, net: &RoadNetwork) -> Result<CohesionReport> {
    let n = net.node_count();
    let anchor_of: Vec<AnchorId> = net
        .nodes()
        .iter()
        .map(|nd| partition.node_to_anchor.get(&nd.id).copied().ok_or(Error::UnknownNode(nd.id)))
        .collect::<Result<_>>()?;
    // union-find over intra-anchor edges
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut edge_counts: BTreeMap<AnchorId, usize> = BTreeMap::new();
    for i in 0..net.edge_count() {
        let (t, h) = (net.tail_idx(i), net.head_idx(i));
        if anchor_of[t] == anchor_of[h] {
            *edge_counts.entry(anchor_of[t]).or_default() += 1;
            let (a, b) = (find(&mut parent, t), find(&mut parent, h));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut nodes: BTreeMap<AnchorId, usize> = BTreeMap::new();
    let mut roots: BTreeMap<AnchorId, BTreeSet<usize>> = BTreeMap::new();
    for u in 0..n {
        *nodes.entry(anchor_of[u]).or_default() += 1;
        let r = find(&mut parent, u);
        roots.entry(anchor_of[u]).or_default().insert(r);
    }
    let anchors: Vec<AnchorCohesion> = nodes
        .iter()
        .map(|(&a, &count)| {
            let components = roots[&a].len();
            AnchorCohesion {
                anchor: a,
                node_count: count,
                edge_count: edge_counts.get(&a).copied().unwrap_or(0),
                components,
                cohesive: components == 1,
            }
        })
        .collect();
    let violations = anchors.iter().filter(|c| !c.cohesive).map(|c| c.anchor).collect();
    Ok(CohesionReport { anchors, violations })
}
