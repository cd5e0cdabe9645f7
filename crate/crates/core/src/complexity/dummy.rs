use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Factor, FactorTable, Scale};
use crate::netgraph::{CellId, NodeId};

/// Per-factor 0/1 indicators: 1 iff the raw value exceeds the factor's
/// mean over all populated keys. Missing keys read as 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DummyTable {
    pub node: BTreeMap<Factor, BTreeMap<NodeId, u8>>,
    pub cell: BTreeMap<Factor, BTreeMap<CellId, u8>>,
    pub thresholds: BTreeMap<Factor, f64>,
}

impl DummyTable {
    pub fn node_value(&self, f: Factor, id: NodeId) -> u8 {
        debug_assert_eq!(f.scale(), Scale::Node);
        self.node.get(&f).and_then(|m| m.get(&id)).copied().unwrap_or(0)
    }

    pub fn cell_value(&self, f: Factor, id: CellId) -> u8 {
        debug_assert_eq!(f.scale(), Scale::Cell);
        self.cell.get(&f).and_then(|m| m.get(&id)).copied().unwrap_or(0)
    }
}

fn code<K: Ord + Copy>(values: &BTreeMap<K, f64>) -> (f64, BTreeMap<K, u8>) {
    if values.is_empty() {
        return (0.0, BTreeMap::new());
    }
    let mean = values.values().sum::<f64>() / values.len() as f64;
    (mean, values.iter().map(|(&k, &v)| (k, u8::from(v > mean))).collect())
}

pub fn dummy_code(table: &FactorTable) -> DummyTable {
    let mut out = DummyTable::default();
    for (&f, values) in &table.node {
        let (mean, d) = code(values);
        out.thresholds.insert(f, mean);
        out.node.insert(f, d);
    }
    for (&f, values) in &table.cell {
        let (mean, d) = code(values);
        out.thresholds.insert(f, mean);
        out.cell.insert(f, d);
    }
    out
}
