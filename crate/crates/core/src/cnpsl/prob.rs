use std::collections::BTreeMap;

use super::{ModelSpec, Params};
use crate::error::{Error, Result};
use crate::features::RouteFeatures;

/// Stabilized ln Σ eˣ; −∞ for an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = logsumexp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

/// β·X + β_PS ln PS.
pub fn utility(route: &RouteFeatures, params: &Params) -> f64 {
    let mut v = 0.0;
    for (b, x) in params.beta.iter().zip(&route.x) {
        v += b * x;
    }
    v + params.beta_ps * route.ln_ps
}

/// PS^{β_PS} e^{β·X}, evaluated in log space.
pub fn route_value(route: &RouteFeatures, params: &Params) -> f64 {
    utility(route, params).exp()
}

/// Nest structure of one choice set evaluated at fixed utilities.
pub(crate) struct NestedEval {
    /// global nest id of each local nest
    pub nests: Vec<u32>,
    /// ln Σ_k α_km e^{V_k}
    pub s: Vec<f64>,
    pub mu: Vec<f64>,
    /// (local nest, ln α) per route
    pub members: Vec<Vec<(usize, f64)>>,
    /// ln Σ_m e^{μ_m S_m}
    pub lse_top: f64,
}

impl NestedEval {
    pub fn new(routes: &[RouteFeatures], v: &[f64], params: &Params, spec: &ModelSpec) -> Result<NestedEval> {
        if routes.is_empty() {
            return Err(Error::InvalidInput("empty choice set".into()));
        }
        let mut local: BTreeMap<u32, usize> = BTreeMap::new();
        for r in routes {
            let mut sum = 0.0;
            for &(m, a) in &r.alpha {
                if m as usize >= spec.n_nests {
                    return Err(Error::UnknownAnchor(m));
                }
                if !(a >= 0.0) {
                    return Err(Error::InvalidInput(format!("negative membership {a}")));
                }
                sum += a;
                if a > 0.0 {
                    local.insert(m, 0);
                }
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("memberships sum to {sum}, expected 1")));
            }
        }
        for (i, slot) in local.values_mut().enumerate() {
            *slot = i;
        }
        let nests: Vec<u32> = local.keys().copied().collect();
        let mut terms: Vec<Vec<f64>> = vec![Vec::new(); nests.len()];
        let mut members = Vec::with_capacity(routes.len());
        for (r, &vi) in routes.iter().zip(v) {
            let mut mem = Vec::with_capacity(r.alpha.len());
            for &(m, a) in &r.alpha {
                if a > 0.0 {
                    let l = local[&m];
                    let la = a.ln();
                    terms[l].push(la + vi);
                    mem.push((l, la));
                }
            }
            members.push(mem);
        }
        let s: Vec<f64> = terms.iter().map(|t| logsumexp(t)).collect();
        let mu: Vec<f64> = nests.iter().map(|&m| params.mu(spec, m as usize)).collect();
        let top: Vec<f64> = mu.iter().zip(&s).map(|(m, s)| m * s).collect();
        Ok(NestedEval {
            nests,
            s,
            mu,
            members,
            lse_top: logsumexp(&top),
        })
    }

    /// ln α_im + (μ_m − 1) S_m over the nests of route `i`.
    pub fn route_terms(&self, i: usize) -> Vec<f64> {
        self.members[i]
            .iter()
            .map(|&(l, la)| la + (self.mu[l] - 1.0) * self.s[l])
            .collect()
    }

    /// ln Pᵢ = Vᵢ + ln Σ_m α_im e^{(μ_m−1)S_m} − ln Σ_p e^{μ_p S_p}.
    pub fn log_prob(&self, i: usize, vi: f64) -> f64 {
        vi + logsumexp(&self.route_terms(i)) - self.lse_top
    }
}

fn utilities(routes: &[RouteFeatures], params: &Params, spec: &ModelSpec) -> Result<Vec<f64>> {
    params.check(spec)?;
    routes
        .iter()
        .map(|r| {
            if r.x.len() != spec.n_features() {
                return Err(Error::DimensionMismatch {
                    expected: spec.n_features(),
                    found: r.x.len(),
                });
            }
            let v = utility(r, params);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidInput("non-finite utility".into()))
            }
        })
        .collect()
}

pub fn choice_log_probabilities(routes: &[RouteFeatures], params: &Params, spec: &ModelSpec) -> Result<Vec<f64>> {
    let v = utilities(routes, params, spec)?;
    let eval = NestedEval::new(routes, &v, params, spec)?;
    Ok((0..routes.len()).map(|i| eval.log_prob(i, v[i])).collect())
}

/// Pᵢ = Σ_m P(m) P(i|m) with P(m) ∝ (Σ_k α_km e^{V_k})^{μ_m} and
/// P(i|m) = α_im e^{Vᵢ} / Σ_k α_km e^{V_k}.
pub fn choice_probabilities(routes: &[RouteFeatures], params: &Params, spec: &ModelSpec) -> Result<Vec<f64>> {
    Ok(choice_log_probabilities(routes, params, spec)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnpsl::{logit, ScaleMode};

    fn spec(k: usize, nests: usize, scale: ScaleMode) -> ModelSpec {
        ModelSpec {
            feature_names: (0..k).map(|i| format!("x{i}")).collect(),
            n_nests: nests,
            scale,
            variant: None,
            weight_by_multiplicity: false,
        }
    }

    fn rf(x: &[f64], ln_ps: f64, alpha: &[(u32, f64)]) -> RouteFeatures {
        RouteFeatures {
            x: x.to_vec(),
            ln_ps,
            alpha: alpha.to_vec(),
        }
    }

    #[test]
    fn route_value_examples() {
        let p = Params { beta: vec![0.0], beta_ps: 0.0, theta: vec![] };
        assert_eq!(route_value(&rf(&[3.0], -0.2, &[(0, 1.0)]), &p), 1.0);
        let p = Params { beta: vec![0.0], beta_ps: 1.0, theta: vec![] };
        assert!((route_value(&rf(&[3.0], 0.5f64.ln(), &[(0, 1.0)]), &p) - 0.5).abs() < 1e-15);
        let p = Params { beta: vec![2f64.ln()], beta_ps: 0.0, theta: vec![] };
        assert!((route_value(&rf(&[1.0], 0.0, &[(0, 1.0)]), &p) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn equal_utilities_uniform() {
        let s = spec(1, 1, ScaleMode::Fixed);
        let p = Params::zeros(&s);
        for k in 2..7 {
            let routes: Vec<_> = (0..k).map(|_| rf(&[1.0], 0.0, &[(0, 1.0)])).collect();
            for q in choice_probabilities(&routes, &p, &s).unwrap() {
                assert!((q - 1.0 / k as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn toy_two_nests_by_hand() {
        // V = (0, ln 2, 0); route 0 in nest 0, route 1 half/half, route 2 in nest 1; μ = 0.5
        let s = spec(1, 2, ScaleMode::Shared);
        let p = Params { beta: vec![2f64.ln()], beta_ps: 0.0, theta: vec![logit(0.5)] };
        let routes = vec![
            rf(&[0.0], 0.0, &[(0, 1.0)]),
            rf(&[1.0], 0.0, &[(0, 0.5), (1, 0.5)]),
            rf(&[0.0], 0.0, &[(1, 1.0)]),
        ];
        let got = choice_probabilities(&routes, &p, &s).unwrap();
        // each nest sums to 1 + 0.5·2 = 2, so P(m) = 1/2 and P(i|m) = (1/2, 1/2)
        let want = [0.25, 0.5, 0.25];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn mnl_reduction_is_exact() {
        let s = spec(2, 1, ScaleMode::Fixed);
        let p = Params { beta: vec![0.3, -1.7], beta_ps: 0.8, theta: vec![] };
        let routes = vec![
            rf(&[1.0, 2.0], -0.1, &[(0, 1.0)]),
            rf(&[0.5, 3.0], -0.7, &[(0, 1.0)]),
            rf(&[2.0, 0.1], 0.0, &[(0, 1.0)]),
        ];
        let v: Vec<f64> = routes.iter().map(|r| utility(r, &p)).collect();
        assert_eq!(choice_probabilities(&routes, &p, &s).unwrap(), softmax(&v));
    }

    #[test]
    fn rejects_bad_input() {
        let s = spec(1, 2, ScaleMode::Shared);
        let p = Params::zeros(&s);
        assert!(choice_probabilities(&[], &p, &s).is_err());
        assert!(choice_probabilities(&[rf(&[0.0], 0.0, &[(5, 1.0)])], &p, &s).is_err());
        assert!(choice_probabilities(&[rf(&[0.0], 0.0, &[(0, 0.4)])], &p, &s).is_err());
        assert!(choice_probabilities(&[rf(&[0.0, 1.0], 0.0, &[(0, 1.0)])], &p, &s).is_err());
    }

    #[test]
    fn logsumexp_edge_cases() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[3.5]), 3.5);
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
