//! Pointy-top hexagonal tessellation in axial coordinates.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geometry::{polyline_length, Point};
use super::{EdgeId, RoadNetwork};
use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub q: i64,
    pub r: i64,
}

impl CellId {
    pub const fn new(q: i64, r: i64) -> Self {
        CellId { q, r }
    }

    /// Axial neighbors, counter-clockwise starting from the +x direction.
    pub fn neighbors(&self) -> [CellId; 6] {
        const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
        DIRS.map(|(dq, dr)| CellId::new(self.q + dq, self.r + dr))
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.q, self.r)
    }
}

impl FromStr for CellId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (q, r) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("bad cell id '{s}'")))?;
        let parse = |v: &str| {
            v.parse::<i64>()
                .map_err(|_| Error::InvalidInput(format!("bad cell id '{s}'")))
        };
        Ok(CellId::new(parse(q)?, parse(r)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexGrid {
    origin: Point,
    radius: f64,
}

impl Default for HexGrid {
    fn default() -> Self {
        HexGrid {
            origin: Point::new(0.0, 0.0),
            radius: 500.0,
        }
    }
}

impl HexGrid {
    pub fn new(origin: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !origin.is_finite() {
            return Err(Error::InvalidInput(format!(
                "hex grid needs a finite origin and positive radius, got {radius}"
            )));
        }
        Ok(HexGrid { origin, radius })
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Area of one cell, 3√3/2 · r².
    pub fn cell_area(&self) -> f64 {
        1.5 * SQRT3 * self.radius * self.radius
    }

    pub fn hex_of(&self, p: &Point) -> CellId {
        let x = (p.x - self.origin.x) / self.radius;
        let y = (p.y - self.origin.y) / self.radius;
        let qf = SQRT3 / 3.0 * x - y / 3.0;
        let rf = 2.0 / 3.0 * y;
        cube_round(qf, rf)
    }

    pub fn center(&self, c: CellId) -> Point {
        let (q, r) = (c.q as f64, c.r as f64);
        Point::new(
            self.origin.x + self.radius * (SQRT3 * q + SQRT3 / 2.0 * r),
            self.origin.y + self.radius * 1.5 * r,
        )
    }

    /// Cell corners in counter-clockwise order.
    pub fn corners(&self, c: CellId) -> [Point; 6] {
        let ctr = self.center(c);
        std::array::from_fn(|k| {
            let a = std::f64::consts::PI / 180.0 * (30.0 + 60.0 * k as f64);
            Point::new(ctr.x + self.radius * a.cos(), ctr.y + self.radius * a.sin())
        })
    }

    /// Largest parameter t ∈ [t0, 1] such that the segment p + t·d stays in `cell`.
    fn exit_param(&self, cell: CellId, p: &Point, q: &Point, t0: f64) -> f64 {
        let corners = self.corners(cell);
        let (dx, dy) = (q.x - p.x, q.y - p.y);
        let mut t_exit = f64::INFINITY;
        for k in 0..6 {
            let a = corners[k];
            let b = corners[(k + 1) % 6];
            // outward normal of a CCW edge
            let (nx, ny) = (b.y - a.y, a.x - b.x);
            let nd = nx * dx + ny * dy;
            if nd > 0.0 {
                let t = -(nx * (p.x - a.x) + ny * (p.y - a.y)) / nd;
                t_exit = t_exit.min(t);
            }
        }
        t_exit.clamp(t0, 1.0)
    }

    /// Split segment p→q into per-cell parameter fractions that sum to exactly 1.
    fn walk_segment(&self, p: &Point, q: &Point, mut visit: impl FnMut(CellId, f64)) {
        let seg_len = p.dist(q);
        let mut cell = self.hex_of(p);
        if seg_len == 0.0 {
            visit(cell, 1.0);
            return;
        }
        let max_steps = 8 + (4.0 * seg_len / self.radius) as usize;
        let mut t = 0.0;
        for _ in 0..max_steps {
            let tx = self.exit_param(cell, p, q, t);
            if tx >= 1.0 {
                break;
            }
            // step just past the boundary to find the next cell
            let mut nudge = 1e-9 * self.radius / seg_len;
            let mut next = cell;
            while tx + nudge < 1.0 {
                next = self.hex_of(&p.lerp(q, tx + nudge));
                if next != cell {
                    break;
                }
                nudge *= 16.0;
            }
            if next == cell {
                break;
            }
            visit(cell, tx - t);
            t = tx;
            cell = next;
        }
        visit(cell, 1.0 - t);
    }
}

fn cube_round(qf: f64, rf: f64) -> CellId {
    let sf = -qf - rf;
    let (mut q, mut r, s) = (qf.round(), rf.round(), sf.round());
    let (dq, dr, ds) = ((q - qf).abs(), (r - rf).abs(), (s - sf).abs());
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    CellId::new(q as i64, r as i64)
}

/// Route length traversed in each cell, in order of first visit.
///
/// Each edge is split at cell boundaries along its polyline and the pieces
/// are scaled so that they sum to the edge's recorded length.
pub fn cells_along(route: &[EdgeId], grid: &HexGrid, net: &RoadNetwork) -> Result<Vec<(CellId, f64)>> {
    let idx = net.route_indices(route)?;
    let mut order: Vec<(CellId, f64)> = Vec::new();
    let mut slot: HashMap<CellId, usize> = HashMap::new();
    let mut add = |c: CellId, len: f64| {
        if len <= 0.0 {
            return;
        }
        match slot.get(&c) {
            Some(&i) => order[i].1 += len,
            None => {
                slot.insert(c, order.len());
                order.push((c, len));
            }
        }
    };
    for &ei in &idx {
        let edge = net.edge_at(ei);
        let poly = net.polyline_at(ei);
        let geo_len = polyline_length(&poly);
        if geo_len == 0.0 {
            add(grid.hex_of(&poly[0]), edge.length);
            continue;
        }
        for w in poly.windows(2) {
            let seg_share = w[0].dist(&w[1]) / geo_len * edge.length;
            if seg_share == 0.0 {
                continue;
            }
            grid.walk_segment(&w[0], &w[1], |c, frac| add(c, frac * seg_share));
        }
    }
    Ok(order)
}
