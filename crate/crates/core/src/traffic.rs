//! Per-edge speed estimation from matched trajectory samples.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::netgraph::{EdgeId, RoadNetwork, Trip};

/// Pooled arithmetic mean of every speed sample recorded on each edge.
/// Zero speeds are kept.
pub fn estimate_speeds(net: &RoadNetwork, trips: &[Trip]) -> Result<BTreeMap<EdgeId, f64>> {
    let mut acc: BTreeMap<EdgeId, (f64, usize)> = BTreeMap::new();
    for t in trips {
        for &(edge, speed) in &t.speed_samples {
            if net.edge_idx(edge).is_none() {
                return Err(Error::UnknownEdge(edge));
            }
            if !speed.is_finite() || speed < 0.0 {
                return Err(Error::InvalidSample { edge, speed });
            }
            let slot = acc.entry(edge).or_insert((0.0, 0));
            slot.0 += speed;
            slot.1 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(e, (sum, n))| (e, sum / n as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillReport {
    pub speeds: BTreeMap<EdgeId, f64>,
    /// Propagation rounds performed.
    pub rounds: usize,
    /// Edges in components without any known speed, given the global mean.
    pub global_fallback: Vec<EdgeId>,
}

/// Give every edge without a speed the mean of its known neighbours (edges
/// sharing an endpoint), in synchronous rounds until no more edges can be
/// reached. Leftover components receive the global mean of known speeds.
pub fn fill_missing_speeds(net: &RoadNetwork, partial: &BTreeMap<EdgeId, f64>) -> Result<FillReport> {
    let n_edges = net.edge_count();
    if n_edges == 0 {
        return Ok(FillReport {
            speeds: BTreeMap::new(),
            rounds: 0,
            global_fallback: vec![],
        });
    }
    let mut state: Vec<Option<f64>> = vec![None; n_edges];
    for (&e, &v) in partial {
        let i = net.edge_idx(e).ok_or(Error::UnknownEdge(e))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidSample { edge: e, speed: v });
        }
        state[i] = Some(v);
    }
    let known: Vec<f64> = state.iter().flatten().copied().collect();
    if known.is_empty() {
        return Err(Error::NoSpeedSamples);
    }
    let global_mean = known.iter().sum::<f64>() / known.len() as f64;

    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); net.node_count()];
    for i in 0..n_edges {
        incident[net.tail_idx(i)].push(i);
        let h = net.head_idx(i);
        if h != net.tail_idx(i) {
            incident[h].push(i);
        }
    }
    let neighbours = |i: usize| {
        let (t, h) = (net.tail_idx(i), net.head_idx(i));
        incident[t]
            .iter()
            .chain(incident[h].iter())
            .copied()
            .filter(move |&j| j != i)
    };

    let mut rounds = 0;
    loop {
        let mut next = state.clone();
        let mut changed = false;
        for i in 0..n_edges {
            if state[i].is_some() {
                continue;
            }
            // an edge adjacent at both endpoints counts once
            let mut seen = Vec::new();
            let (mut sum, mut n) = (0.0, 0usize);
            for j in neighbours(i) {
                if let Some(v) = state[j] {
                    if !seen.contains(&j) {
                        seen.push(j);
                        sum += v;
                        n += 1;
                    }
                }
            }
            if n > 0 {
                next[i] = Some(sum / n as f64);
                changed = true;
            }
        }
        if !changed {
            break;
        }
        state = next;
        rounds += 1;
    }

    let mut global_fallback = Vec::new();
    let speeds = state
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let id = net.edge_at(i).id;
            let v = v.unwrap_or_else(|| {
                global_fallback.push(id);
                global_mean
            });
            (id, v)
        })
        .collect();
    if !global_fallback.is_empty() {
        log::warn!("{} edges had no connected speed observations; used global mean", global_fallback.len());
    }
    Ok(FillReport {
        speeds,
        rounds,
        global_fallback,
    })
}
