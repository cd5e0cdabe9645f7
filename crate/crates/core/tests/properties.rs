mod common;

use std::collections::BTreeMap;

use anchorroute::choiceset::{k_shortest, weighted_jaccard, PathWeight, Route};
use anchorroute::cnpsl::{choice_probabilities, logistic, logit, ModelSpec, Params, ScaleMode};
use anchorroute::features::{path_sizes, Dataset, Observation, RouteFeatures};
use anchorroute::netgraph::io::{parse_network, write_network};
use anchorroute::netgraph::{NodeId, RoadNetwork};
use anchorroute::pipeline::artifacts::{parse_features, write_features};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(k: usize, n_nests: usize, scale: ScaleMode) -> ModelSpec {
    ModelSpec {
        feature_names: (0..k).map(|i| format!("x{i}")).collect(),
        n_nests,
        scale,
        variant: None,
        weight_by_multiplicity: false,
    }
}

fn random_params(r: &mut ChaCha8Rng, s: &ModelSpec) -> Params {
    Params {
        beta: (0..s.n_features()).map(|_| r.gen_range(-2.0..2.0)).collect(),
        beta_ps: r.gen_range(-1.0..2.0),
        theta: (0..s.n_theta()).map(|_| r.gen_range(-4.0..4.0)).collect(),
    }
}

/// Routes from a few random ODs on a random graph, grouped per OD.
fn route_groups(seed: u64) -> (RoadNetwork, Vec<Vec<Route>>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let net = random_graph(&mut r, 12, 1000.0, 0.35);
    let mut groups = Vec::new();
    for _ in 0..6 {
        let o = NodeId(r.gen_range(1..=12));
        let d = NodeId(r.gen_range(1..=12));
        if let Ok(routes) = k_shortest(&net, o, d, 8, PathWeight::Length) {
            if !routes.is_empty() {
                groups.push(routes);
            }
        }
    }
    (net, groups)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn probabilities_form_a_distribution(seed in any::<u64>(), n in 1usize..12, nests in 1usize..5,
                                         k in 0usize..4, per_nest in any::<bool>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let routes = random_routes(&mut r, n, nests, k);
        let s = spec(k, nests, if per_nest { ScaleMode::PerNest } else { ScaleMode::Shared });
        let p = random_params(&mut r, &s);
        let probs = choice_probabilities(&routes, &p, &s).unwrap();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn probabilities_follow_route_permutations(seed in any::<u64>(), n in 2usize..10, nests in 1usize..4) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let routes = random_routes(&mut r, n, nests, 2);
        let s = spec(2, nests, ScaleMode::PerNest);
        let p = random_params(&mut r, &s);
        let base = choice_probabilities(&routes, &p, &s).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, r.gen_range(0..=i));
        }
        let shuffled: Vec<RouteFeatures> = order.iter().map(|&i| routes[i].clone()).collect();
        let moved = choice_probabilities(&shuffled, &p, &s).unwrap();
        for (j, &i) in order.iter().enumerate() {
            prop_assert!((moved[j] - base[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_match_plain_formula(seed in any::<u64>(), n in 1usize..8, nests in 1usize..4) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let routes = random_routes(&mut r, n, nests, 3);
        let s = spec(3, nests, ScaleMode::PerNest);
        let p = random_params(&mut r, &s);
        let mu: Vec<f64> = (0..nests).map(|m| p.mu(&s, m)).collect();
        let want = cnl_oracle(&routes, &p.beta, p.beta_ps, &mu);
        let got = choice_probabilities(&routes, &p, &s).unwrap();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12 * w.max(1e-3));
        }
    }

    #[test]
    fn logistic_and_logit_invert(t in -20.0f64..20.0) {
        let mu = logistic(t);
        prop_assert!(mu > 0.0 && mu < 1.0);
        prop_assert!((logit(mu) - t).abs() < 1e-14 * (1.0 + t.abs().exp()));
    }

    #[test]
    fn path_sizes_in_unit_interval(seed in 0u64..500) {
        let (_, groups) = route_groups(seed);
        for routes in groups {
            let ps = path_sizes(&routes);
            prop_assert_eq!(ps.len(), routes.len());
            prop_assert!(ps.iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-12), "{:?}", ps);
            if routes.len() == 1 {
                prop_assert!((ps[0] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jaccard_is_a_similarity(seed in 0u64..500) {
        let (_, groups) = route_groups(seed);
        let all: Vec<Route> = groups.into_iter().flatten().collect();
        for a in &all {
            prop_assert!((weighted_jaccard(a, a) - 1.0).abs() < 1e-12);
            for b in &all {
                let j = weighted_jaccard(a, b);
                prop_assert!((0.0..=1.0).contains(&j));
                prop_assert_eq!(j, weighted_jaccard(b, a));
            }
        }
    }

    #[test]
    fn network_text_roundtrips(seed in any::<u64>(), n in 2usize..20) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let net = random_graph(&mut r, n, 5000.0, 0.3);
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let back = parse_network(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.nodes(), net.nodes());
        prop_assert_eq!(back.edges().len(), net.edge_count());
        for (a, b) in back.edges().iter().zip(net.edges()) {
            prop_assert_eq!((a.id, a.tail, a.head, a.length), (b.id, b.tail, b.head, b.length));
            prop_assert_eq!(net.polyline_at(net.edge_idx(b.id).unwrap()), back.polyline_at(back.edge_idx(a.id).unwrap()));
        }
    }

    #[test]
    fn features_text_roundtrips(seed in any::<u64>(), n_obs in 1usize..6, nests in 1usize..4) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let observations: Vec<Observation> = (0..n_obs)
            .map(|id| {
                let n = r.gen_range(1..6);
                Observation {
                    id,
                    od: (NodeId(r.gen_range(0..100)), NodeId(r.gen_range(100..200))),
                    routes: random_routes(&mut r, n, nests, 3),
                    chosen: r.gen_range(0..n),
                    multiplicity: (0..n).map(|_| r.gen_range(0..4)).collect(),
                    depart: r.gen_bool(0.5).then(|| r.gen_range(0.0..86400.0)),
                    occupied: r.gen_bool(0.5).then(|| r.gen_bool(0.5)),
                    chosen_length: r.gen_range(500.0..20000.0),
                }
            })
            .collect();
        let data = Dataset {
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            n_nests: nests,
            variant: None,
            units: BTreeMap::new(),
            observations,
        };
        let mut buf = Vec::new();
        write_features(&data, &mut buf).unwrap();
        let back = parse_features(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.feature_names, data.feature_names);
        prop_assert_eq!(back.observations, data.observations);
    }
}
