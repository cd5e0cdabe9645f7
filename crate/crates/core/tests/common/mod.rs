//! Reference implementations and random instance generators shared by the
//! integration tests. Everything here is written from the definitions, not
//! from the library code, and favors brute force over speed.

#![allow(dead_code)]

use std::collections::BTreeMap;

use anchorroute::features::RouteFeatures;
use anchorroute::netgraph::{CellId, Edge, EdgeId, HexGrid, Node, NodeId, Point, RoadNetwork};
use rand::Rng;

pub const TAU: f64 = std::f64::consts::TAU;

// ---------------------------------------------------------------- choice

/// P_i = Σ_m P(m) P(i|m) with
/// P(m) = (Σ_k α_km w_k)^μ_m / Σ_p (Σ_k α_kp w_k)^μ_p and
/// P(i|m) = α_im w_i / Σ_k α_km w_k, where w = PS^β_PS · e^{β·x}.
pub fn cnl_oracle(routes: &[RouteFeatures], beta: &[f64], beta_ps: f64, mu: &[f64]) -> Vec<f64> {
    let n_nests = mu.len();
    let w: Vec<f64> = routes
        .iter()
        .map(|r| {
            let bx: f64 = r.x.iter().zip(beta).map(|(x, b)| x * b).sum();
            r.ln_ps.exp().powf(beta_ps) * bx.exp()
        })
        .collect();
    let alpha = |i: usize, m: usize| -> f64 {
        routes[i]
            .alpha
            .iter()
            .filter(|(k, _)| *k as usize == m)
            .map(|(_, a)| *a)
            .sum()
    };
    let inclusive: Vec<f64> = (0..n_nests)
        .map(|m| (0..routes.len()).map(|k| alpha(k, m) * w[k]).sum())
        .collect();
    let denom: f64 = (0..n_nests)
        .filter(|&m| inclusive[m] > 0.0)
        .map(|m| inclusive[m].powf(mu[m]))
        .sum();
    (0..routes.len())
        .map(|i| {
            (0..n_nests)
                .filter(|&m| inclusive[m] > 0.0)
                .map(|m| inclusive[m].powf(mu[m]) / denom * (alpha(i, m) * w[i] / inclusive[m]))
                .sum()
        })
        .collect()
}

/// Random choice set with up to `max_routes` routes, `n_nests` nests and
/// `k` features. Every route gets one to `n_nests` memberships.
pub fn random_routes(rng: &mut impl Rng, n_routes: usize, n_nests: usize, k: usize) -> Vec<RouteFeatures> {
    (0..n_routes)
        .map(|_| {
            let mut nests: Vec<u32> = (0..n_nests as u32).collect();
            let take = rng.gen_range(1..=n_nests);
            for i in 0..take {
                let j = rng.gen_range(i..n_nests);
                nests.swap(i, j);
            }
            let raw: Vec<f64> = (0..take).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut alpha: Vec<(u32, f64)> = nests[..take].iter().zip(&raw).map(|(&m, a)| (m, a / total)).collect();
            alpha.sort_by_key(|a| a.0);
            RouteFeatures {
                x: (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                ln_ps: rng.gen_range(0.1f64..1.0).ln(),
                alpha,
            }
        })
        .collect()
}

// ---------------------------------------------------------------- graphs

/// Random directed graph on `n` nodes in a `extent`² square. Edge lengths
/// are small integers so that tied shortest paths are frequent and exact.
pub fn random_graph(rng: &mut impl Rng, n: usize, extent: f64, edge_prob: f64) -> RoadNetwork {
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: NodeId(i as u64 + 1),
            pos: Point::new(rng.gen_range(0.0..extent), rng.gen_range(0.0..extent)),
        })
        .collect();
    let mut edges = Vec::new();
    for t in 0..n {
        for h in 0..n {
            if t == h || !rng.gen_bool(edge_prob) {
                continue;
            }
            let copies = if rng.gen_bool(0.1) { 2 } else { 1 };
            for _ in 0..copies {
                let geometry = if rng.gen_bool(0.3) {
                    let (a, b) = (nodes[t].pos, nodes[h].pos);
                    let bend = Point::new(
                        (a.x + b.x) / 2.0 + rng.gen_range(-100.0..100.0),
                        (a.y + b.y) / 2.0 + rng.gen_range(-100.0..100.0),
                    );
                    Some(vec![a, bend, b])
                } else {
                    None
                };
                edges.push(Edge {
                    id: EdgeId(edges.len() as u64 + 1),
                    tail: nodes[t].id,
                    head: nodes[h].id,
                    length: rng.gen_range(1..=6) as f64,
                    speed: Some(rng.gen_range(5.0..15.0)),
                    geometry,
                });
            }
        }
    }
    RoadNetwork::new(nodes, edges).unwrap()
}

/// Shortest parallel edge between ordered node pairs, self-loops dropped.
pub fn min_adjacency(net: &RoadNetwork) -> Vec<Vec<f64>> {
    let n = net.node_count();
    let mut w = vec![vec![f64::INFINITY; n]; n];
    for e in net.edges() {
        let t = net.node_idx(e.tail).unwrap();
        let h = net.node_idx(e.head).unwrap();
        if t != h && e.length < w[t][h] {
            w[t][h] = e.length;
        }
    }
    w
}

pub fn floyd_warshall(net: &RoadNetwork) -> Vec<Vec<f64>> {
    let n = net.node_count();
    let mut d = min_adjacency(net);
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Every shortest node path from `s` to `t`, found by depth-first search
/// pruned with exact distances.
pub fn all_shortest_paths(adj: &[Vec<f64>], dist: &[Vec<f64>], s: usize, t: usize) -> Vec<Vec<usize>> {
    fn go(adj: &[Vec<f64>], dist: &[Vec<f64>], t: usize, path: &mut Vec<usize>, so_far: f64, target: f64, out: &mut Vec<Vec<usize>>) {
        let v = *path.last().unwrap();
        if v == t {
            if so_far == target {
                out.push(path.clone());
            }
            return;
        }
        for (w, &len) in adj[v].iter().enumerate() {
            if len.is_infinite() || path.contains(&w) {
                continue;
            }
            let next = so_far + len;
            if next + dist[w][t] <= target {
                path.push(w);
                go(adj, dist, t, path, next, target, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    if dist[s][t].is_finite() {
        go(adj, dist, t, &mut vec![s], 0.0, dist[s][t], &mut out);
    }
    out
}

pub fn eccentricity_oracle(d: &[Vec<f64>]) -> Vec<f64> {
    d.iter()
        .map(|row| row.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max))
        .collect()
}

pub fn closeness_oracle(d: &[Vec<f64>]) -> Vec<f64> {
    d.iter()
        .map(|row| {
            let reach: Vec<f64> = row.iter().copied().filter(|x| x.is_finite()).collect();
            let total: f64 = reach.iter().sum();
            if reach.len() <= 1 || total == 0.0 {
                0.0
            } else {
                (reach.len() - 1) as f64 / total
            }
        })
        .collect()
}

pub fn degree_oracle(net: &RoadNetwork) -> Vec<f64> {
    let n = net.node_count();
    (0..n)
        .map(|v| {
            let mut nb: Vec<usize> = net
                .edges()
                .iter()
                .filter_map(|e| {
                    let t = net.node_idx(e.tail).unwrap();
                    let h = net.node_idx(e.head).unwrap();
                    match (t == v, h == v) {
                        (true, false) => Some(h),
                        (false, true) => Some(t),
                        _ => None,
                    }
                })
                .collect();
            nb.sort();
            nb.dedup();
            if n <= 1 {
                0.0
            } else {
                nb.len() as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Σ over ordered pairs (s, t) of the share of shortest s→t paths through v.
pub fn betweenness_oracle(net: &RoadNetwork) -> Vec<f64> {
    let n = net.node_count();
    let adj = min_adjacency(net);
    let d = floyd_warshall(net);
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let paths = all_shortest_paths(&adj, &d, s, t);
            if paths.is_empty() {
                continue;
            }
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    bc[v] += 1.0 / paths.len() as f64;
                }
            }
        }
    }
    bc
}

/// Every loopless edge path from `s` to `t` with its total weight, sorted
/// by weight.
pub fn all_simple_paths(net: &RoadNetwork, w: &[f64], s: usize, t: usize) -> Vec<(f64, Vec<usize>)> {
    fn go(net: &RoadNetwork, w: &[f64], t: usize, nodes: &mut Vec<usize>, edges: &mut Vec<usize>, out: &mut Vec<(f64, Vec<usize>)>) {
        let v = *nodes.last().unwrap();
        if v == t {
            out.push((edges.iter().map(|&e| w[e]).sum(), edges.clone()));
            return;
        }
        for &e in net.out_edges(v) {
            let h = net.head_idx(e);
            if nodes.contains(&h) {
                continue;
            }
            nodes.push(h);
            edges.push(e);
            go(net, w, t, nodes, edges, out);
            nodes.pop();
            edges.pop();
        }
    }
    let mut out = Vec::new();
    go(net, w, t, &mut vec![s], &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

// ---------------------------------------------------------------- hexagons

/// Cell whose center is nearest to `p`, searched over a neighbourhood.
pub fn nearest_cell(grid: &HexGrid, p: &Point) -> CellId {
    let guess = grid.hex_of(p);
    let mut best = (f64::INFINITY, guess);
    for dq in -3..=3 {
        for dr in -3..=3 {
            let c = CellId::new(guess.q + dq, guess.r + dr);
            let d = grid.center(c).dist(p);
            if d < best.0 {
                best = (d, c);
            }
        }
    }
    best.1
}

pub fn polyline(net: &RoadNetwork, e: &Edge) -> Vec<Point> {
    e.geometry.clone().unwrap_or_else(|| {
        vec![
            net.node(e.tail).unwrap().pos,
            net.node(e.head).unwrap().pos,
        ]
    })
}

pub fn seg_len(a: &Point, b: &Point) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

pub fn midpoint_along(pts: &[Point]) -> Point {
    let total: f64 = pts.windows(2).map(|w| seg_len(&w[0], &w[1])).sum();
    let mut left = total / 2.0;
    for w in pts.windows(2) {
        let l = seg_len(&w[0], &w[1]);
        if l >= left && l > 0.0 {
            let f = left / l;
            return Point::new(w[0].x + f * (w[1].x - w[0].x), w[0].y + f * (w[1].y - w[0].y));
        }
        left -= l;
    }
    *pts.last().unwrap()
}

/// Hexagon corners from the center, pointy orientation.
pub fn hex_corners(grid: &HexGrid, c: CellId) -> Vec<Point> {
    let ctr = grid.center(c);
    (0..6)
        .map(|i| {
            let a = TAU / 12.0 + i as f64 * TAU / 6.0;
            Point::new(ctr.x + grid.radius() * a.cos(), ctr.y + grid.radius() * a.sin())
        })
        .collect()
}

// ---------------------------------------------------------------- polygons

pub fn shoelace(ring: &[Point]) -> f64 {
    let n = ring.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}

pub fn perimeter(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n).map(|i| seg_len(&ring[i], &ring[(i + 1) % n])).sum()
}

pub fn area_centroid(ring: &[Point]) -> Point {
    let n = ring.len();
    let a = shoelace(ring);
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (p, q) = (ring[i], ring[(i + 1) % n]);
        let cross = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    Point::new(cx / (6.0 * a), cy / (6.0 * a))
}

fn inside_convex(p: &Point, ccw: &[Point]) -> bool {
    let n = ccw.len();
    (0..n).all(|i| {
        let (a, b) = (ccw[i], ccw[(i + 1) % n]);
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= -1e-9
    })
}

fn segment_cross(a: &Point, b: &Point, c: &Point, d: &Point) -> Option<Point> {
    let r = (b.x - a.x, b.y - a.y);
    let s = (d.x - c.x, d.y - c.y);
    let den = r.0 * s.1 - r.1 * s.0;
    if den.abs() < 1e-14 {
        return None;
    }
    let t = ((c.x - a.x) * s.1 - (c.y - a.y) * s.0) / den;
    let u = ((c.x - a.x) * r.1 - (c.y - a.y) * r.0) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| Point::new(a.x + t * r.0, a.y + t * r.1))
}

/// Area of the intersection of two convex counter-clockwise polygons: the
/// convex hull of mutually contained vertices and edge crossings.
pub fn convex_overlap_area(p: &[Point], q: &[Point]) -> f64 {
    let mut pts: Vec<Point> = p.iter().filter(|v| inside_convex(v, q)).copied().collect();
    pts.extend(q.iter().filter(|v| inside_convex(v, p)));
    for i in 0..p.len() {
        for j in 0..q.len() {
            if let Some(x) = segment_cross(&p[i], &p[(i + 1) % p.len()], &q[j], &q[(j + 1) % q.len()]) {
                pts.push(x);
            }
        }
    }
    if pts.len() < 3 {
        return 0.0;
    }
    shoelace(&convex_hull(pts)).abs()
}

/// Andrew's monotone chain.
pub fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let cross = |o: &Point, a: &Point, b: &Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Point> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Rotated rectangle, counter-clockwise.
pub fn rectangle(center: Point, w: f64, h: f64, angle: f64) -> Vec<Point> {
    let (c, s) = (angle.cos(), angle.sin());
    [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
        .iter()
        .map(|(u, v)| {
            let (x, y) = (u * w, v * h);
            Point::new(center.x + x * c - y * s, center.y + x * s + y * c)
        })
        .collect()
}

pub fn point_in_polygon(p: &Point, ring: &[Point]) -> bool {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + n - 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
    }
    inside
}

/// Nearest hit of a ray with a polygon boundary within `max_dist`.
pub fn ray_hit(o: &Point, dir: (f64, f64), ring: &[Point], max_dist: f64) -> Option<f64> {
    let far = Point::new(o.x + dir.0 * max_dist, o.y + dir.1 * max_dist);
    let n = ring.len();
    (0..n)
        .filter_map(|i| segment_cross(o, &far, &ring[i], &ring[(i + 1) % n]))
        .map(|x| seg_len(o, &x))
        .min_by(f64::total_cmp)
}

/// Relative comparison with an absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

pub fn by_cell<T>(entries: impl IntoIterator<Item = (CellId, T)>) -> BTreeMap<CellId, Vec<T>> {
    let mut out: BTreeMap<CellId, Vec<T>> = BTreeMap::new();
    for (c, v) in entries {
        out.entry(c).or_default().push(v);
    }
    out
}
