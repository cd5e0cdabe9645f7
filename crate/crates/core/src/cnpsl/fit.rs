use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::optim::{maximize, OptimOptions};
use super::{log_likelihood_and_gradient, logistic, ModelSpec, Params, ScaleMode};
use crate::error::{Error, Result};
use crate::features::{Dataset, ModelVariant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub optim: OptimOptions,
    pub scale: ScaleMode,
    /// relative step of the central-difference Hessian
    pub hessian_step: f64,
    pub weight_by_multiplicity: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            optim: OptimOptions::default(),
            scale: ScaleMode::Shared,
            hessian_step: 1e-5,
            weight_by_multiplicity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: Option<ModelVariant>,
    pub scale: ScaleMode,
    pub names: Vec<String>,
    /// β, β_PS, then μ̃ on its natural (0, 1) scale
    pub estimates: Vec<f64>,
    pub std_errors: Vec<Option<f64>>,
    pub t_stats: Vec<Option<f64>>,
    /// optimizer coordinates, θ in place of μ̃
    pub raw: Vec<f64>,
    /// covariance of `raw`; absent when the Hessian is singular
    pub covariance: Option<Vec<Vec<f64>>>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub rho_bar_sq: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub grad_inf_norm: f64,
}

impl FitResult {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.estimates[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).and_then(|i| self.std_errors[i])
    }

    pub fn params(&self, spec: &ModelSpec) -> Result<Params> {
        Params::from_vec(spec, &self.raw)
    }

    pub fn table(&self) -> String {
        Comparison { fits: vec![self.clone()] }.table()
    }
}

/// ρ̄² = 1 − (L̂ − N)/L₀.
pub fn adjusted_rho_squared(ll: f64, ll_null: f64, n_params: usize) -> f64 {
    1.0 - (ll - n_params as f64) / ll_null
}

/// Σ ln(1/|Cₙ|): every route equally likely.
pub fn null_log_likelihood(data: &Dataset, spec: &ModelSpec) -> f64 {
    data.observations
        .iter()
        .map(|o| -spec.observation_weight(o) * (o.routes.len() as f64).ln())
        .sum()
}

pub fn stars(t: Option<f64>) -> &'static str {
    match t.map(f64::abs) {
        Some(t) if t > 2.576 => "***",
        Some(t) if t > 1.96 => "**",
        Some(t) if t > 1.645 => "*",
        _ => "",
    }
}

fn check_dataset(data: &Dataset) -> Result<()> {
    if data.observations.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if let Some(o) = data.observations.iter().find(|o| o.routes.len() < 2) {
        return Err(Error::InvalidInput(format!(
            "observation {} has {} route(s); at least 2 are needed",
            o.id,
            o.routes.len()
        )));
    }
    let bad = data
        .observations
        .iter()
        .flat_map(|o| &o.routes)
        .any(|r| !r.ln_ps.is_finite() || r.x.iter().any(|v| !v.is_finite()));
    if bad {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    Ok(())
}

fn numerical_hessian(data: &Dataset, spec: &ModelSpec, x: &[f64], step: f64) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let hj = step * x[j].abs().max(1.0);
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[j] += hj;
        b[j] -= hj;
        let (_, ga) = log_likelihood_and_gradient(data, &Params::from_vec(spec, &a)?, spec)?;
        let (_, gb) = log_likelihood_and_gradient(data, &Params::from_vec(spec, &b)?, spec)?;
        for i in 0..n {
            h[(i, j)] = (ga[i] - gb[i]) / (2.0 * hj);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Covariance (−H)⁻¹ restricted to well-determined directions, and per
/// coordinate whether it touches a singular direction.
fn covariance(h: &DMatrix<f64>) -> (DMatrix<f64>, Vec<bool>) {
    let n = h.nrows();
    let eig = SymmetricEigen::new(-h);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * lmax.max(1e-300);
    let mut cov = DMatrix::zeros(n, n);
    let mut affected = vec![false; n];
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        if l > tol {
            cov += v * v.transpose() / l;
        } else {
            for (i, a) in affected.iter_mut().enumerate() {
                if v[i].abs() > 1e-6 {
                    *a = true;
                }
            }
        }
    }
    (cov, affected)
}

/// Maximum-likelihood fit from β = 0, θ = 0.
pub fn fit(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    check_dataset(data)?;
    if data.feature_names != spec.feature_names {
        return Err(Error::DimensionMismatch {
            expected: spec.n_features(),
            found: data.feature_names.len(),
        });
    }
    let x0 = Params::zeros(spec).to_vec();
    let objective = |x: &[f64]| log_likelihood_and_gradient(data, &Params::from_vec(spec, x)?, spec);
    let out = maximize(objective, &x0, &opts.optim)?;
    if !out.converged {
        log::warn!("fit did not converge after {} iterations", out.iterations);
    }

    let h = numerical_hessian(data, spec, &out.x, opts.hessian_step)?;
    let (cov, affected) = covariance(&h);
    let n = out.x.len();
    let k = spec.n_features() + 1;
    let mut estimates = out.x.clone();
    let mut std_errors = Vec::with_capacity(n);
    for j in 0..n {
        let var = cov[(j, j)];
        let se = (!affected[j] && var > 0.0).then(|| var.sqrt());
        if j >= k {
            // delta method for μ̃ = σ(θ)
            let mu = logistic(out.x[j]);
            estimates[j] = mu;
            std_errors.push(se.map(|s| s * mu * (1.0 - mu)));
        } else {
            std_errors.push(se);
        }
    }
    let t_stats = estimates
        .iter()
        .zip(&std_errors)
        .map(|(e, s)| s.map(|s| e / s))
        .collect();
    let singular = affected.iter().any(|&a| a);
    let ll_null = null_log_likelihood(data, spec);
    Ok(FitResult {
        variant: spec.variant,
        scale: spec.scale,
        names: spec.param_names(),
        estimates,
        std_errors,
        t_stats,
        covariance: (!singular).then(|| (0..n).map(|i| (0..n).map(|j| cov[(i, j)]).collect()).collect()),
        raw: out.x,
        log_likelihood: out.value,
        null_log_likelihood: ll_null,
        rho_bar_sq: adjusted_rho_squared(out.value, ll_null, n),
        n_params: n,
        n_obs: data.observations.len(),
        iterations: out.iterations,
        converged: out.converged,
        grad_inf_norm: out.grad.iter().fold(0.0, |m, g| m.max(g.abs())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub fits: Vec<FitResult>,
}

impl Comparison {
    pub fn best_by_rho_bar_sq(&self) -> Option<&FitResult> {
        self.fits.iter().max_by(|a, b| a.rho_bar_sq.total_cmp(&b.rho_bar_sq))
    }

    /// Coefficient table: one row per parameter, one column per model,
    /// estimates with significance stars and standard errors beneath.
    pub fn table(&self) -> String {
        let mut rows: Vec<String> = Vec::new();
        for f in &self.fits {
            for n in &f.names {
                if !rows.contains(n) {
                    rows.push(n.clone());
                }
            }
        }
        let heads: Vec<String> = self
            .fits
            .iter()
            .enumerate()
            .map(|(i, f)| f.variant.map_or(format!("fit{}", i + 1), |v| format!("Model {}", v.number())))
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<24}", "");
        for h in &heads {
            let _ = write!(out, "{h:>16}");
        }
        out.push('\n');
        for name in &rows {
            let _ = write!(out, "{name:<24}");
            for f in &self.fits {
                let cell = match f.names.iter().position(|n| n == name) {
                    Some(i) => format!("{:.3}{}", f.estimates[i], stars(f.t_stats[i])),
                    None => "-".into(),
                };
                let _ = write!(out, "{cell:>16}");
            }
            out.push('\n');
            let _ = write!(out, "{:<24}", "");
            for f in &self.fits {
                let cell = match f.names.iter().position(|n| n == name) {
                    Some(i) => f.std_errors[i].map_or("(n/a)".into(), |s| format!("({s:.3})")),
                    None => String::new(),
                };
                let _ = write!(out, "{cell:>16}");
            }
            out.push('\n');
        }
        let footer: [(&str, Box<dyn Fn(&FitResult) -> String>); 5] = [
            ("Log-likelihood", Box::new(|f| format!("{:.3}", f.log_likelihood))),
            ("Null log-likelihood", Box::new(|f| format!("{:.3}", f.null_log_likelihood))),
            ("Adjusted rho-squared", Box::new(|f| format!("{:.3}", f.rho_bar_sq))),
            ("Parameters", Box::new(|f| f.n_params.to_string())),
            ("Observations", Box::new(|f| f.n_obs.to_string())),
        ];
        for (label, cell) in footer {
            let _ = write!(out, "{label:<24}");
            for f in &self.fits {
                let _ = write!(out, "{:>16}", cell(f));
            }
            out.push('\n');
        }
        out.push_str("* |t| > 1.645, ** |t| > 1.96, *** |t| > 2.576\n");
        out
    }
}

/// Fit all four variants on the same choice sets. `full` must carry all
/// sixteen columns and the anchor nests.
pub fn compare_variants(full: &Dataset, opts: &FitOptions) -> Result<Comparison> {
    let fits = ModelVariant::ALL
        .iter()
        .map(|&v| {
            let data = full.project(v)?;
            let mut spec = ModelSpec::for_dataset(&data, opts.scale);
            spec.weight_by_multiplicity = opts.weight_by_multiplicity;
            fit(&data, &spec, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { fits })
}
