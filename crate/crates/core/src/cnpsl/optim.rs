//! BFGS maximization with a strong-Wolfe line search.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// converged when ‖∇f‖∞ falls below this
    pub grad_tol: f64,
    /// or when |Δf| / max(|f|, 1) falls below this
    pub rel_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

struct Point {
    a: f64,
    f: f64,
    df: f64,
    g: DVector<f64>,
}

/// Negated objective so the search below minimizes. Evaluation errors and
/// non-finite values read as +∞.
struct Objective<'a, F> {
    f: &'a F,
}

impl<F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>> Objective<'_, F> {
    fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (v, g) = (self.f)(x.as_slice())?;
        Ok((-v, -DVector::from_vec(g)))
    }

    fn probe(&self, x: &DVector<f64>, d: &DVector<f64>, a: f64) -> Point {
        match self.eval(&(x + d * a)) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Point { a, f, df: g.dot(d), g },
            _ => Point {
                a,
                f: f64::INFINITY,
                df: f64::NAN,
                g: DVector::zeros(x.len()),
            },
        }
    }

    fn zoom(&self, x: &DVector<f64>, d: &DVector<f64>, f0: f64, df0: f64, mut lo: Point, mut hi: Point) -> Option<Point> {
        for _ in 0..40 {
            let width = hi.a - lo.a;
            let mut a = if hi.f.is_finite() {
                // minimizer of the quadratic through (lo.f, lo.df) and hi.f
                let denom = 2.0 * (hi.f - lo.f - lo.df * width);
                if denom > 0.0 {
                    lo.a - lo.df * width * width / denom
                } else {
                    lo.a + 0.5 * width
                }
            } else {
                lo.a + 0.5 * width
            };
            let (left, right) = if width > 0.0 {
                (lo.a + 0.1 * width, hi.a - 0.1 * width)
            } else {
                (hi.a - 0.1 * width, lo.a + 0.1 * width)
            };
            if !a.is_finite() || a < left || a > right {
                a = lo.a + 0.5 * width;
            }
            let p = self.probe(x, d, a);
            if p.f > f0 + C1 * a * df0 || p.f >= lo.f {
                hi = p;
            } else {
                if p.df.abs() <= -C2 * df0 {
                    return Some(p);
                }
                if p.df * (hi.a - lo.a) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
            if (hi.a - lo.a).abs() < 1e-16 * lo.a.abs().max(1.0) {
                break;
            }
        }
        (lo.a > 0.0).then_some(lo)
    }

    fn line_search(&self, x: &DVector<f64>, d: &DVector<f64>, f0: f64, g0: &DVector<f64>, a0: f64) -> Option<Point> {
        let df0 = g0.dot(d);
        let mut prev = Point {
            a: 0.0,
            f: f0,
            df: df0,
            g: g0.clone(),
        };
        let mut a = a0;
        for i in 0..40 {
            let p = self.probe(x, d, a);
            if p.f > f0 + C1 * a * df0 || (i > 0 && p.f >= prev.f) {
                return self.zoom(x, d, f0, df0, prev, p);
            }
            if p.df.abs() <= -C2 * df0 {
                return Some(p);
            }
            if p.df >= 0.0 {
                return self.zoom(x, d, f0, df0, p, prev);
            }
            prev = p;
            a *= 2.0;
        }
        Some(prev).filter(|p| p.a > 0.0)
    }
}

/// Maximize `f`, which returns the value and gradient at a point.
pub fn maximize<F>(f: F, x0: &[f64], opts: &OptimOptions) -> Result<OptimOutcome>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let obj = Objective { f: &f };
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, mut g) = obj.eval(&x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if g.amax() < opts.grad_tol {
            converged = true;
            break;
        }
        let mut d = -(&h * &g);
        if d.dot(&g) >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh = true;
            d = -g.clone();
        }
        let a0 = if fresh { (1.0 / g.amax()).min(1.0) } else { 1.0 };
        let step = match obj.line_search(&x, &d, fx, &g, a0) {
            Some(p) => p,
            None if !fresh => {
                h = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            None => break,
        };
        iterations += 1;
        let s = &d * step.a;
        let y = &step.g - &g;
        let rel = (step.f - fx).abs() / fx.abs().max(1.0);
        x += &s;
        fx = step.f;
        g = step.g;

        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        if g.amax() < opts.grad_tol || rel < opts.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(OptimOutcome {
        x: x.as_slice().to_vec(),
        value: -fx,
        grad: (-g).as_slice().to_vec(),
        iterations,
        converged,
    })
}
