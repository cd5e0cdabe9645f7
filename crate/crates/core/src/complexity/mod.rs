//! Built-environment complexity factors at node and hexagon scale,
//! mean-threshold dummy coding and collinearity diagnostics.

mod buildings;
mod cells;
mod centrality;
mod dummy;
mod vif;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{Building, CellId, HexGrid, NodeId, Poi, RoadNetwork};

pub use buildings::{building_density, compactness, floor_area_ratio, sky_view_factor, SkyViewParams};
pub use cells::{avg_road_length, circuity, connectivity, shannon, simpson};
pub use centrality::{betweenness, closeness, degree_centrality, eccentricity};
pub use dummy::{dummy_code, DummyTable};
pub use vif::{vif, VifReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scale {
    Node,
    Cell,
}

/// The thirteen complexity factors, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Eccentricity,
    AvgRoadLength,
    Circuity,
    Degree,
    Closeness,
    Betweenness,
    Connectivity,
    Simpson,
    Shannon,
    BuildingDensity,
    FloorAreaRatio,
    Compactness,
    SkyView,
}

impl Factor {
    pub const ALL: [Factor; 13] = [
        Factor::Eccentricity,
        Factor::AvgRoadLength,
        Factor::Circuity,
        Factor::Degree,
        Factor::Closeness,
        Factor::Betweenness,
        Factor::Connectivity,
        Factor::Simpson,
        Factor::Shannon,
        Factor::BuildingDensity,
        Factor::FloorAreaRatio,
        Factor::Compactness,
        Factor::SkyView,
    ];

    pub fn scale(self) -> Scale {
        match self {
            Factor::Eccentricity | Factor::Degree | Factor::Closeness | Factor::Betweenness | Factor::SkyView => {
                Scale::Node
            }
            _ => Scale::Cell,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Factor::Eccentricity => "eccentricity",
            Factor::AvgRoadLength => "avg_road_length",
            Factor::Circuity => "circuity",
            Factor::Degree => "degree",
            Factor::Closeness => "closeness",
            Factor::Betweenness => "betweenness",
            Factor::Connectivity => "connectivity",
            Factor::Simpson => "simpson",
            Factor::Shannon => "shannon",
            Factor::BuildingDensity => "building_density",
            Factor::FloorAreaRatio => "floor_area_ratio",
            Factor::Compactness => "compactness",
            Factor::SkyView => "sky_view",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Factor::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown factor '{s}'")))
    }
}

/// Raw factor values keyed by node or cell. Cells without the underlying
/// features are simply absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorTable {
    pub node: BTreeMap<Factor, BTreeMap<NodeId, f64>>,
    pub cell: BTreeMap<Factor, BTreeMap<CellId, f64>>,
}

impl FactorTable {
    pub fn mean(&self, f: Factor) -> Option<f64> {
        fn avg<K>(m: &BTreeMap<K, f64>) -> Option<f64> {
            (!m.is_empty()).then(|| m.values().sum::<f64>() / m.len() as f64)
        }
        match f.scale() {
            Scale::Node => self.node.get(&f).and_then(avg),
            Scale::Cell => self.cell.get(&f).and_then(avg),
        }
    }

    pub fn means(&self) -> BTreeMap<Factor, f64> {
        Factor::ALL
            .into_iter()
            .filter_map(|f| self.mean(f).map(|m| (f, m)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplexityParams {
    pub sky: SkyViewParams,
}

impl Default for ComplexityParams {
    fn default() -> Self {
        ComplexityParams {
            sky: SkyViewParams::default(),
        }
    }
}

/// Compute every factor for the network and its environmental layers.
pub fn compute_factor_table(
    net: &RoadNetwork,
    grid: &HexGrid,
    buildings: &[Building],
    pois: &[Poi],
    n_categories: usize,
    params: &ComplexityParams,
) -> Result<FactorTable> {
    if net.node_count() == 0 {
        return Err(Error::EmptyNetwork);
    }
    let mut t = FactorTable::default();
    t.node.insert(Factor::Eccentricity, eccentricity(net)?);
    t.node.insert(Factor::Degree, degree_centrality(net));
    t.node.insert(Factor::Closeness, closeness(net));
    t.node.insert(Factor::Betweenness, betweenness(net));
    t.node.insert(Factor::SkyView, sky_view_factor(buildings, net, &params.sky));
    t.cell.insert(Factor::AvgRoadLength, avg_road_length(net, grid));
    t.cell.insert(Factor::Circuity, circuity(net, grid));
    t.cell.insert(Factor::Connectivity, connectivity(net, grid));
    t.cell.insert(Factor::Simpson, simpson(pois, grid, n_categories));
    t.cell.insert(Factor::Shannon, shannon(pois, grid, n_categories));
    t.cell.insert(Factor::BuildingDensity, building_density(buildings, grid));
    t.cell.insert(Factor::FloorAreaRatio, floor_area_ratio(buildings, grid));
    t.cell.insert(Factor::Compactness, compactness(buildings, grid));
    Ok(t)
}
