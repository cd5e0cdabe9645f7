//! Planar geometry helpers. All coordinates are projected meters.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].dist(&w[1])).sum()
}

/// Point at fraction `frac` of the polyline's arc length.
pub fn point_along(points: &[Point], frac: f64) -> Point {
    let total = polyline_length(points);
    if total == 0.0 || points.len() < 2 {
        return points[0];
    }
    let target = frac.clamp(0.0, 1.0) * total;
    let mut walked = 0.0;
    for w in points.windows(2) {
        let seg = w[0].dist(&w[1]);
        if walked + seg >= target && seg > 0.0 {
            return w[0].lerp(&w[1], (target - walked) / seg);
        }
        walked += seg;
    }
    *points.last().unwrap()
}

/// Signed shoelace area; positive for counter-clockwise rings.
/// The ring is implicitly closed.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc * 0.5
}

pub fn ring_perimeter(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n).map(|i| ring[i].dist(&ring[(i + 1) % n])).sum()
}

pub fn ring_centroid(ring: &[Point]) -> Point {
    let a = signed_area(ring);
    let n = ring.len();
    if a == 0.0 {
        let sx: f64 = ring.iter().map(|p| p.x).sum();
        let sy: f64 = ring.iter().map(|p| p.y).sum();
        return Point::new(sx / n as f64, sy / n as f64);
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    Point::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// Even-odd point-in-polygon test.
pub fn point_in_ring(p: &Point, ring: &[Point]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn segments_intersect(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |o: &Point, a: &Point, p: &Point| {
        p.x >= o.x.min(a.x) && p.x <= o.x.max(a.x) && p.y >= o.y.min(a.y) && p.y <= o.y.max(a.y)
    };
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

/// True when no two non-adjacent ring edges touch. O(n²).
pub fn ring_is_simple(ring: &[Point]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (b1, b2) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(&a1, &a2, &b1, &b2) {
                return false;
            }
        }
    }
    true
}

/// Sutherland-Hodgman clip of an arbitrary ring against a convex,
/// counter-clockwise clip ring. Area of the result is exact even for
/// concave subjects (degenerate bridging edges carry zero area).
pub fn clip_to_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let inside = |p: &Point| cross(&a, &b, p) >= 0.0;
        let intersect = |p: &Point, q: &Point| {
            let dp = cross(&a, &b, p);
            let dq = cross(&a, &b, q);
            p.lerp(q, dp / (dp - dq))
        };
        let n = input.len();
        for k in 0..n {
            let cur = input[k];
            let prev = input[(k + n - 1) % n];
            match (inside(&prev), inside(&cur)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(intersect(&prev, &cur)),
                (false, true) => {
                    output.push(intersect(&prev, &cur));
                    output.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    output
}

/// Distance along a ray from `origin` in direction (cos, sin) of `azimuth`
/// to the nearest crossing of the ring boundary, if within `max_dist`.
pub fn ray_hit_distance(origin: &Point, azimuth: f64, ring: &[Point], max_dist: f64) -> Option<f64> {
    let (dx, dy) = (azimuth.cos(), azimuth.sin());
    let n = ring.len();
    let mut best: Option<f64> = None;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let ex = b.x - a.x;
        let ey = b.y - a.y;
        let denom = dx * ey - dy * ex;
        if denom.abs() < 1e-15 {
            continue;
        }
        let wx = a.x - origin.x;
        let wy = a.y - origin.y;
        let t = (wx * ey - wy * ex) / denom;
        let s = (wx * dy - wy * dx) / denom;
        if t >= 0.0 && (0.0..=1.0).contains(&s) && t <= max_dist {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    }
    best
}
