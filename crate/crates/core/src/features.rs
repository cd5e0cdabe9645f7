//! Per-route regressors: route characteristics, path-size, route-aggregated
//! complexity dummies and anchor membership fractions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{AnchorId, AnchorPartition};
use crate::choiceset::{ChoiceSet, Route};
use crate::complexity::{DummyTable, Factor, Scale};
use crate::error::{Error, Result};
use crate::netgraph::{cells_along, EdgeId, HexGrid, NodeId, Point, RoadNetwork};

pub const ROUTE_COLUMNS: [&str; 3] = ["length", "duration", "intersection"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurnPenalties {
    pub right: f64,
    pub straight: f64,
    pub left: f64,
    /// |δ| at or below this many degrees counts as straight
    pub straight_max_deg: f64,
    /// |δ| above this many degrees counts as a U-turn
    pub uturn_min_deg: f64,
    pub uturn: f64,
}

impl Default for TurnPenalties {
    fn default() -> Self {
        TurnPenalties {
            right: 1.0,
            straight: 1.5,
            left: 2.0,
            straight_max_deg: 30.0,
            uturn_min_deg: 150.0,
            uturn: 2.0,
        }
    }
}

impl TurnPenalties {
    /// Penalty for a signed heading change in degrees, positive = left (CCW).
    pub fn classify(&self, delta_deg: f64) -> f64 {
        if delta_deg.abs() > self.uturn_min_deg {
            self.uturn
        } else if delta_deg.abs() <= self.straight_max_deg {
            self.straight
        } else if delta_deg > 0.0 {
            self.left
        } else {
            self.right
        }
    }
}

fn heading(a: &Point, b: &Point) -> f64 {
    (b.y - a.y).atan2(b.x - a.x)
}

/// Heading change into (−180°, 180°].
fn turn_angle_deg(incoming: f64, outgoing: f64) -> f64 {
    let mut d = (outgoing - incoming).to_degrees() % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}

fn first_heading(poly: &[Point]) -> f64 {
    let a = poly[0];
    let b = poly.iter().skip(1).find(|p| **p != a).unwrap_or(&poly[1]);
    heading(&a, b)
}

fn last_heading(poly: &[Point]) -> f64 {
    let b = *poly.last().unwrap();
    let a = poly.iter().rev().skip(1).find(|p| **p != b).unwrap_or(&poly[poly.len() - 2]);
    heading(a, &b)
}

/// Sum of turn penalties over the route's internal nodes.
pub fn intersection_penalty(route: &[EdgeId], net: &RoadNetwork, p: &TurnPenalties) -> Result<f64> {
    let idx = net.route_indices(route)?;
    let mut total = 0.0;
    for w in idx.windows(2) {
        let inc = last_heading(&net.polyline_at(w[0]));
        let out = first_heading(&net.polyline_at(w[1]));
        total += p.classify(turn_angle_deg(inc, out));
    }
    Ok(total)
}

/// Path-size of every route in the set:
/// PSᵢ = Σ_{a∈i} (l_a / Lᵢ) / #{routes j containing a}.
pub fn path_sizes(routes: &[Route]) -> Vec<f64> {
    let mut usage: BTreeMap<EdgeId, usize> = BTreeMap::new();
    for r in routes {
        let mut uniq: Vec<EdgeId> = r.edges.clone();
        uniq.sort_unstable();
        uniq.dedup();
        for e in uniq {
            *usage.entry(e).or_default() += 1;
        }
    }
    routes
        .iter()
        .map(|r| {
            r.edges
                .iter()
                .zip(&r.lengths)
                .map(|(e, l)| l / r.length / usage[e] as f64)
                .sum()
        })
        .collect()
}

pub fn path_size(i: usize, set: &ChoiceSet) -> f64 {
    path_sizes(&set.routes)[i]
}

/// Route-level aggregates of the 13 dummies in canonical factor order.
/// Cell factors are length-weighted over the traversed cells, node factors
/// are averaged over the traversed nodes.
pub fn aggregate_dummies(route: &Route, dummies: &DummyTable, grid: &HexGrid, net: &RoadNetwork) -> Result<[f64; 13]> {
    let cells = cells_along(&route.edges, grid, net)?;
    let total: f64 = cells.iter().map(|(_, l)| l).sum();
    let nodes: Vec<NodeId> = route.nodes(net)?;
    let mut out = [0.0; 13];
    for (k, f) in Factor::ALL.into_iter().enumerate() {
        out[k] = match f.scale() {
            Scale::Cell => {
                cells
                    .iter()
                    .map(|&(c, l)| l * dummies.cell_value(f, c) as f64)
                    .sum::<f64>()
                    / total
            }
            Scale::Node => {
                nodes.iter().map(|&n| dummies.node_value(f, n) as f64).sum::<f64>() / nodes.len() as f64
            }
        };
    }
    Ok(out)
}

/// Share of the route's length on edges of each anchor.
pub fn alpha_memberships(route: &Route, partition: &AnchorPartition) -> Result<BTreeMap<AnchorId, f64>> {
    let mut acc: BTreeMap<AnchorId, f64> = BTreeMap::new();
    for (e, l) in route.edges.iter().zip(&route.lengths) {
        *acc.entry(partition.anchor_of_edge(*e)?).or_default() += l;
    }
    Ok(acc.into_iter().map(|(a, l)| (a, l / route.length)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelVariant {
    /// route characteristics, one universal nest
    #[serde(alias = "model1")]
    M1,
    /// route characteristics and complexity dummies, one universal nest
    #[serde(alias = "model2")]
    M2,
    /// route characteristics with anchor nests
    #[serde(alias = "model3")]
    M3,
    /// route characteristics and complexity dummies with anchor nests
    #[serde(alias = "model4")]
    M4,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [ModelVariant::M1, ModelVariant::M2, ModelVariant::M3, ModelVariant::M4];

    pub fn uses_complexity(self) -> bool {
        matches!(self, ModelVariant::M2 | ModelVariant::M4)
    }

    pub fn uses_anchors(self) -> bool {
        matches!(self, ModelVariant::M3 | ModelVariant::M4)
    }

    pub fn number(self) -> u8 {
        match self {
            ModelVariant::M1 => 1,
            ModelVariant::M2 => 2,
            ModelVariant::M3 => 3,
            ModelVariant::M4 => 4,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model{}", self.number())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches("model").trim_start_matches('M').trim_start_matches('m') {
            "1" => Ok(ModelVariant::M1),
            "2" => Ok(ModelVariant::M2),
            "3" => Ok(ModelVariant::M3),
            "4" => Ok(ModelVariant::M4),
            _ => Err(Error::InvalidInput(format!("unknown model variant '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteFeatures {
    pub x: Vec<f64>,
    pub ln_ps: f64,
    /// Sparse (nest index, membership) pairs summing to 1.
    pub alpha: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub id: usize,
    pub od: (NodeId, NodeId),
    pub routes: Vec<RouteFeatures>,
    pub chosen: usize,
    pub multiplicity: Vec<u32>,
    pub depart: Option<f64>,
    pub occupied: Option<bool>,
    /// meters
    pub chosen_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub n_nests: usize,
    pub variant: Option<ModelVariant>,
    pub units: BTreeMap<String, String>,
    pub observations: Vec<Observation>,
}

pub(crate) fn default_units() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("length".to_string(), "km".to_string()),
        ("duration".to_string(), "min".to_string()),
        ("intersection".to_string(), "penalty units".to_string()),
        ("complexity".to_string(), "share of route above factor mean".to_string()),
    ])
}

pub fn full_feature_names() -> Vec<String> {
    ROUTE_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(Factor::ALL.iter().map(|f| f.name().to_string()))
        .collect()
}

pub struct FeatureContext<'a> {
    pub net: &'a RoadNetwork,
    pub grid: &'a HexGrid,
    pub dummies: &'a DummyTable,
    pub partition: &'a AnchorPartition,
    pub turns: TurnPenalties,
}

fn route_features(ctx: &FeatureContext<'_>, route: &Route, ln_ps: f64) -> Result<RouteFeatures> {
    let mut x = vec![
        route.length / 1000.0,
        route.duration / 60.0,
        intersection_penalty(&route.edges, ctx.net, &ctx.turns)?,
    ];
    x.extend(aggregate_dummies(route, ctx.dummies, ctx.grid, ctx.net)?);
    let alpha = alpha_memberships(route, ctx.partition)?
        .into_iter()
        .map(|(a, v)| (a.0, v))
        .collect();
    Ok(RouteFeatures { x, ln_ps, alpha })
}

/// Dataset with all 16 columns and anchor nests.
pub fn build_full_dataset(ctx: &FeatureContext<'_>, sets: &[ChoiceSet]) -> Result<Dataset> {
    let observations = sets
        .par_iter()
        .enumerate()
        .map(|(id, set)| {
            let ps = path_sizes(&set.routes);
            let routes = set
                .routes
                .iter()
                .zip(&ps)
                .map(|(r, &p)| route_features(ctx, r, p.ln()))
                .collect::<Result<Vec<_>>>()?;
            Ok(Observation {
                id,
                od: set.od,
                routes,
                chosen: set.chosen,
                multiplicity: set.multiplicity.clone(),
                depart: set.meta.depart,
                occupied: set.meta.occupied,
                chosen_length: set.routes[set.chosen].length,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        feature_names: full_feature_names(),
        n_nests: ctx.partition.anchor_count,
        variant: None,
        units: default_units(),
        observations,
    })
}

impl Dataset {
    /// Select the columns and nest structure of one model variant from a
    /// full (16-column, anchor-nested) dataset.
    pub fn project(&self, variant: ModelVariant) -> Result<Dataset> {
        let full = full_feature_names();
        if self.feature_names != full {
            return Err(Error::DimensionMismatch {
                expected: full.len(),
                found: self.feature_names.len(),
            });
        }
        let cols = if variant.uses_complexity() { full.len() } else { ROUTE_COLUMNS.len() };
        let observations = self
            .observations
            .iter()
            .map(|o| {
                let routes = o
                    .routes
                    .iter()
                    .map(|r| {
                        if r.x.len() != full.len() {
                            return Err(Error::DimensionMismatch {
                                expected: full.len(),
                                found: r.x.len(),
                            });
                        }
                        if let Some(&(a, _)) = r.alpha.iter().find(|(a, _)| *a as usize >= self.n_nests) {
                            return Err(Error::UnknownAnchor(a));
                        }
                        Ok(RouteFeatures {
                            x: r.x[..cols].to_vec(),
                            ln_ps: r.ln_ps,
                            alpha: if variant.uses_anchors() { r.alpha.clone() } else { vec![(0, 1.0)] },
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Observation { routes, ..o.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            feature_names: full[..cols].to_vec(),
            n_nests: if variant.uses_anchors() { self.n_nests } else { 1 },
            variant: Some(variant),
            units: self.units.clone(),
            observations,
        })
    }

    pub fn dimension(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, ids: impl Fn(&Observation) -> bool) -> Dataset {
        Dataset {
            observations: self.observations.iter().filter(|o| ids(o)).cloned().collect(),
            ..self.clone()
        }
    }
}

pub fn build_dataset(ctx: &FeatureContext<'_>, sets: &[ChoiceSet], variant: ModelVariant) -> Result<Dataset> {
    build_full_dataset(ctx, sets)?.project(variant)
}
