//! Cross-nested path-size logit: utilities, choice probabilities,
//! log-likelihood with analytic gradient, and maximum-likelihood fitting.

mod fit;
mod likelihood;
mod optim;
mod prob;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, ModelVariant, Observation};

pub use fit::{adjusted_rho_squared, compare_variants, fit, null_log_likelihood, stars, Comparison, FitOptions, FitResult};
pub use likelihood::{log_likelihood, log_likelihood_and_gradient, observation_log_prob};
pub use optim::{maximize, OptimOptions, OptimOutcome};
pub use prob::{choice_log_probabilities, choice_probabilities, logsumexp, route_value, softmax, utility};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ScaleMode {
    /// μ̃ = 1 on every nest, nothing estimated.
    Fixed,
    /// One μ̃ shared by all nests.
    #[default]
    Shared,
    /// One μ̃ per nest.
    PerNest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub feature_names: Vec<String>,
    pub n_nests: usize,
    pub scale: ScaleMode,
    pub variant: Option<ModelVariant>,
    /// Weight each observation by the observed-trip count of its chosen
    /// route instead of counting it once.
    #[serde(default)]
    pub weight_by_multiplicity: bool,
}

impl ModelSpec {
    /// Spec matching a dataset. Datasets with a single nest always get a
    /// fixed unit scale; otherwise `scale` applies.
    pub fn for_dataset(data: &Dataset, scale: ScaleMode) -> ModelSpec {
        let scale = if data.n_nests <= 1 { ScaleMode::Fixed } else { scale };
        ModelSpec {
            feature_names: data.feature_names.clone(),
            n_nests: data.n_nests.max(1),
            scale,
            variant: data.variant,
            weight_by_multiplicity: false,
        }
    }

    pub fn observation_weight(&self, obs: &Observation) -> f64 {
        if self.weight_by_multiplicity {
            obs.multiplicity.get(obs.chosen).copied().unwrap_or(1).max(1) as f64
        } else {
            1.0
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_theta(&self) -> usize {
        match self.scale {
            ScaleMode::Fixed => 0,
            ScaleMode::Shared => 1,
            ScaleMode::PerNest => self.n_nests,
        }
    }

    /// β, β_PS and the scale parameters.
    pub fn n_params(&self) -> usize {
        self.n_features() + 1 + self.n_theta()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.feature_names.clone();
        names.push("path_size".into());
        match self.scale {
            ScaleMode::Fixed => {}
            ScaleMode::Shared => names.push("mu".into()),
            ScaleMode::PerNest => names.extend((0..self.n_nests).map(|m| format!("mu_{m}"))),
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub beta: Vec<f64>,
    pub beta_ps: f64,
    /// Unconstrained scale parameters, μ̃ = 1 / (1 + e^{−θ}).
    pub theta: Vec<f64>,
}

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(mu: f64) -> f64 {
    (mu / (1.0 - mu)).ln()
}

impl Params {
    pub fn zeros(spec: &ModelSpec) -> Params {
        Params {
            beta: vec![0.0; spec.n_features()],
            beta_ps: 0.0,
            theta: vec![0.0; spec.n_theta()],
        }
    }

    pub fn from_vec(spec: &ModelSpec, x: &[f64]) -> Result<Params> {
        if x.len() != spec.n_params() {
            return Err(Error::DimensionMismatch {
                expected: spec.n_params(),
                found: x.len(),
            });
        }
        let k = spec.n_features();
        Ok(Params {
            beta: x[..k].to_vec(),
            beta_ps: x[k],
            theta: x[k + 1..].to_vec(),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.beta_ps);
        v.extend(&self.theta);
        v
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.beta.len() != spec.n_features() {
            return Err(Error::DimensionMismatch {
                expected: spec.n_features(),
                found: self.beta.len(),
            });
        }
        if self.theta.len() != spec.n_theta() {
            return Err(Error::DimensionMismatch {
                expected: spec.n_theta(),
                found: self.theta.len(),
            });
        }
        if !self.to_vec().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Scale of nest `m`.
    pub fn mu(&self, spec: &ModelSpec, m: usize) -> f64 {
        match spec.scale {
            ScaleMode::Fixed => 1.0,
            ScaleMode::Shared => logistic(self.theta[0]),
            ScaleMode::PerNest => logistic(self.theta[m]),
        }
    }
}
