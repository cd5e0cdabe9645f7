use rayon::prelude::*;

use super::prob::{logsumexp, NestedEval};
use super::{utility, ModelSpec, Params, ScaleMode};
use crate::error::{Error, Result};
use crate::features::{Dataset, Observation};

fn obs_eval(obs: &Observation, params: &Params, spec: &ModelSpec) -> Result<(Vec<f64>, NestedEval)> {
    if obs.chosen >= obs.routes.len() {
        return Err(Error::InvalidInput(format!(
            "observation {}: chosen index {} out of {} routes",
            obs.id,
            obs.chosen,
            obs.routes.len()
        )));
    }
    let mut v = Vec::with_capacity(obs.routes.len());
    for r in &obs.routes {
        if r.x.len() != spec.n_features() {
            return Err(Error::DimensionMismatch {
                expected: spec.n_features(),
                found: r.x.len(),
            });
        }
        v.push(utility(r, params));
    }
    let eval = NestedEval::new(&obs.routes, &v, params, spec)?;
    Ok((v, eval))
}

pub fn observation_log_prob(obs: &Observation, params: &Params, spec: &ModelSpec) -> Result<f64> {
    let (v, eval) = obs_eval(obs, params, spec)?;
    Ok(eval.log_prob(obs.chosen, v[obs.chosen]))
}

/// ln P(chosen) and its gradient in the packed parameter layout.
fn observation_gradient(obs: &Observation, params: &Params, spec: &ModelSpec) -> Result<(f64, Vec<f64>)> {
    let (v, eval) = obs_eval(obs, params, spec)?;
    let i = obs.chosen;
    let t = eval.route_terms(i);
    let lse_t = logsumexp(&t);
    let lp = v[i] + lse_t - eval.lse_top;

    let nl = eval.nests.len();
    // posterior weights of the chosen route's nests and the nest marginals
    let mut r = vec![0.0; nl];
    for (&(l, _), ti) in eval.members[i].iter().zip(&t) {
        r[l] = (ti - lse_t).exp();
    }
    let q: Vec<f64> = (0..nl).map(|l| (eval.mu[l] * eval.s[l] - eval.lse_top).exp()).collect();

    let k = spec.n_features();
    let mut g = vec![0.0; spec.n_params()];
    for (kk, route) in obs.routes.iter().enumerate() {
        let mut dv = if kk == i { 1.0 } else { 0.0 };
        for &(l, la) in &eval.members[kk] {
            let w = (la + v[kk] - eval.s[l]).exp();
            dv += (r[l] * (eval.mu[l] - 1.0) - q[l] * eval.mu[l]) * w;
        }
        for (gj, xj) in g[..k].iter_mut().zip(&route.x) {
            *gj += dv * xj;
        }
        g[k] += dv * route.ln_ps;
    }
    for l in 0..nl {
        let mu = eval.mu[l];
        let dmu = (r[l] - q[l]) * eval.s[l] * mu * (1.0 - mu);
        match spec.scale {
            ScaleMode::Fixed => {}
            ScaleMode::Shared => g[k + 1] += dmu,
            ScaleMode::PerNest => g[k + 1 + eval.nests[l] as usize] += dmu,
        }
    }
    Ok((lp, g))
}

/// Pairwise summation over a fixed tree, independent of how the terms were
/// produced.
fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

fn pairwise_sum_vec(xs: &[Vec<f64>], dim: usize) -> Vec<f64> {
    match xs.len() {
        0 => vec![0.0; dim],
        1 => xs[0].clone(),
        n => {
            let a = pairwise_sum_vec(&xs[..n / 2], dim);
            let b = pairwise_sum_vec(&xs[n / 2..], dim);
            a.iter().zip(&b).map(|(x, y)| x + y).collect()
        }
    }
}

pub fn log_likelihood(data: &Dataset, params: &Params, spec: &ModelSpec) -> Result<f64> {
    params.check(spec)?;
    let terms = data
        .observations
        .par_iter()
        .map(|o| Ok(spec.observation_weight(o) * observation_log_prob(o, params, spec)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms))
}

pub fn log_likelihood_and_gradient(data: &Dataset, params: &Params, spec: &ModelSpec) -> Result<(f64, Vec<f64>)> {
    params.check(spec)?;
    let terms = data
        .observations
        .par_iter()
        .map(|o| {
            let w = spec.observation_weight(o);
            let (lp, g) = observation_gradient(o, params, spec)?;
            Ok(if w == 1.0 { (lp, g) } else { (w * lp, g.into_iter().map(|x| w * x).collect()) })
        })
        .collect::<Result<Vec<_>>>()?;
    let (lls, grads): (Vec<f64>, Vec<Vec<f64>>) = terms.into_iter().unzip();
    Ok((pairwise_sum(&lls), pairwise_sum_vec(&grads, spec.n_params())))
}
