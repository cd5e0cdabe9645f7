use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this unexplained-variance share a column counts as perfectly collinear.
const COLLINEAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifReport {
    pub names: Vec<String>,
    /// `f64::INFINITY` marks a perfectly collinear column.
    pub vif: Vec<f64>,
    /// Pairwise Pearson correlations, row-major.
    pub correlation: Vec<Vec<f64>>,
}

/// Variance inflation factors 1/(1 − R²ₖ), regressing each column on all
/// others plus an intercept, and the Pearson correlation matrix.
pub fn vif(names: &[String], rows: &[Vec<f64>]) -> Result<VifReport> {
    let k = names.len();
    let n = rows.len();
    if k == 0 {
        return Err(Error::InvalidInput("no factors given".into()));
    }
    if n < k + 1 {
        return Err(Error::InvalidInput(format!("need at least {} observations, got {n}", k + 1)));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, found: r.len() });
    }
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let means: Vec<f64> = (0..k).map(|j| x.column(j).mean()).collect();
    let centered = DMatrix::from_fn(n, k, |i, j| x[(i, j)] - means[j]);
    let ss: Vec<f64> = (0..k).map(|j| centered.column(j).norm_squared()).collect();
    for (j, &s) in ss.iter().enumerate() {
        if s == 0.0 || !s.is_finite() {
            return Err(Error::InvalidInput(format!("column '{}' is constant", names[j])));
        }
    }

    let correlation = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| centered.column(a).dot(&centered.column(b)) / (ss[a] * ss[b]).sqrt())
                .collect()
        })
        .collect();

    let mut vifs = Vec::with_capacity(k);
    for j in 0..k {
        let y: DVector<f64> = centered.column(j).into_owned();
        let vif = if k == 1 {
            1.0
        } else {
            let others: Vec<usize> = (0..k).filter(|&c| c != j).collect();
            let a = DMatrix::from_fn(n, others.len(), |i, c| centered[(i, others[c])]);
            let svd = a.clone().svd(true, true);
            let eps = 1e-12 * svd.singular_values.max().max(1.0);
            let beta = svd
                .solve(&y, eps)
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            let resid = &y - &a * beta;
            let unexplained = resid.norm_squared() / ss[j];
            if unexplained < COLLINEAR_TOL {
                f64::INFINITY
            } else {
                1.0 / unexplained
            }
        };
        vifs.push(vif);
    }
    Ok(VifReport {
        names: names.to_vec(),
        vif: vifs,
        correlation,
    })
}
