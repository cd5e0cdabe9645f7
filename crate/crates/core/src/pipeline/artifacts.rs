//! On-disk stage outputs: tab-separated tables, JSON and JSON-lines.
//! Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchors::{AnchorId, AnchorPartition, CohesionReport};
use crate::choiceset::ChoiceSet;
use crate::complexity::{DummyTable, Factor, FactorTable, Scale, SkyViewParams};
use crate::error::{Error, Result};
use crate::features::{Dataset, Observation, RouteFeatures};
use crate::netgraph::{CellId, EdgeId, HexGrid, NodeId, Point};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write a file through a closure, attributing I/O failures to the path.
pub fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_file(path, |w| writeln!(w, "{text}"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

/// Non-comment, non-empty lines with their 1-based numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{tok}'")))
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or("NA".into(), |x| x.to_string())
}

pub fn write_speeds(speeds: &BTreeMap<EdgeId, f64>, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "edge_id\tspeed_mps")?;
    for (e, v) in speeds {
        writeln!(w, "{e}\t{v}")?;
    }
    Ok(())
}

pub fn parse_speeds(text: &str) -> Result<BTreeMap<EdgeId, f64>> {
    let mut out = BTreeMap::new();
    for (n, line) in data_lines(text).skip(1) {
        let toks: Vec<&str> = line.split('\t').collect();
        if toks.len() != 2 {
            return Err(Error::parse(n, "speed line needs `edge_id<TAB>speed`"));
        }
        let e = EdgeId(field(toks[0], n, "edge id")?);
        if out.insert(e, field(toks[1], n, "speed")?).is_some() {
            return Err(Error::DuplicateId(format!("edge {e}")));
        }
    }
    Ok(out)
}

pub fn read_speeds(path: &Path) -> Result<BTreeMap<EdgeId, f64>> {
    parse_speeds(&read_text(path)?)
}

fn scale_factors(scale: Scale) -> Vec<Factor> {
    Factor::ALL.into_iter().filter(|f| f.scale() == scale).collect()
}

/// Raw values and dummies per node, one column pair per node-scale factor.
pub fn write_node_metrics(table: &FactorTable, dummies: &DummyTable, w: &mut dyn Write) -> std::io::Result<()> {
    let factors = scale_factors(Scale::Node);
    let mut ids: Vec<NodeId> = table.node.values().flat_map(|m| m.keys().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    write!(w, "node_id")?;
    for f in &factors {
        write!(w, "\t{f}")?;
    }
    for f in &factors {
        write!(w, "\t{f}_dummy")?;
    }
    writeln!(w)?;
    for id in ids {
        write!(w, "{id}")?;
        for f in &factors {
            write!(w, "\t{}", opt_num(table.node.get(f).and_then(|m| m.get(&id)).copied()))?;
        }
        for f in &factors {
            write!(w, "\t{}", dummies.node_value(*f, id))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_cell_metrics(table: &FactorTable, dummies: &DummyTable, w: &mut dyn Write) -> std::io::Result<()> {
    let factors = scale_factors(Scale::Cell);
    let mut ids: Vec<CellId> = table.cell.values().flat_map(|m| m.keys().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    write!(w, "cell_id")?;
    for f in &factors {
        write!(w, "\t{f}")?;
    }
    for f in &factors {
        write!(w, "\t{f}_dummy")?;
    }
    writeln!(w)?;
    for id in ids {
        write!(w, "{id}")?;
        for f in &factors {
            write!(w, "\t{}", opt_num(table.cell.get(f).and_then(|m| m.get(&id)).copied()))?;
        }
        for f in &factors {
            write!(w, "\t{}", dummies.cell_value(*f, id))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Dummy columns of a metrics table keyed by the parsed first column.
fn parse_dummy_columns<K: Ord + Copy>(
    text: &str,
    scale: Scale,
    key: impl Fn(&str, usize) -> Result<K>,
) -> Result<BTreeMap<Factor, BTreeMap<K, u8>>> {
    let mut lines = data_lines(text);
    let (hn, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
    let cols: Vec<&str> = header.split('\t').collect();
    let mut wanted = Vec::new();
    for f in scale_factors(scale) {
        let name = format!("{f}_dummy");
        let i = cols
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::parse(hn, format!("missing column {name}")))?;
        wanted.push((f, i));
    }
    let mut out: BTreeMap<Factor, BTreeMap<K, u8>> = wanted.iter().map(|&(f, _)| (f, BTreeMap::new())).collect();
    for (n, line) in lines {
        let toks: Vec<&str> = line.split('\t').collect();
        if toks.len() != cols.len() {
            return Err(Error::parse(n, format!("expected {} fields, found {}", cols.len(), toks.len())));
        }
        let k = key(toks[0], n)?;
        for &(f, i) in &wanted {
            let v: u8 = field(toks[i], n, "dummy")?;
            if v > 1 {
                return Err(Error::parse(n, format!("dummy must be 0 or 1, got {v}")));
            }
            out.get_mut(&f).unwrap().insert(k, v);
        }
    }
    Ok(out)
}

pub fn parse_dummies(node_text: &str, cell_text: &str) -> Result<DummyTable> {
    Ok(DummyTable {
        node: parse_dummy_columns(node_text, Scale::Node, |t, n| Ok(NodeId(field(t, n, "node id")?)))?,
        cell: parse_dummy_columns(cell_text, Scale::Cell, |t, n| {
            t.parse::<CellId>().map_err(|_| Error::parse(n, format!("invalid cell id '{t}'")))
        })?,
        thresholds: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsMeta {
    pub hex_radius: f64,
    pub hex_origin: [f64; 2],
    pub hex_orientation: String,
    pub sky: SkyViewParams,
    /// factor name → dummy threshold (mean)
    pub thresholds: BTreeMap<String, f64>,
}

impl MetricsMeta {
    pub fn new(grid: &HexGrid, sky: SkyViewParams, dummies: &DummyTable) -> MetricsMeta {
        MetricsMeta {
            hex_radius: grid.radius(),
            hex_origin: [grid.origin().x, grid.origin().y],
            hex_orientation: "pointy".into(),
            sky,
            thresholds: dummies.thresholds.iter().map(|(f, v)| (f.to_string(), *v)).collect(),
        }
    }

    pub fn grid(&self) -> Result<HexGrid> {
        HexGrid::new(Point::new(self.hex_origin[0], self.hex_origin[1]), self.hex_radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSummary {
    pub anchor_count: usize,
    pub modularity: f64,
    pub history: Vec<f64>,
    pub cohesion: CohesionReport,
}

pub fn write_anchor_table<K: std::fmt::Display>(
    head: &str,
    rows: &BTreeMap<K, AnchorId>,
    w: &mut dyn Write,
) -> std::io::Result<()> {
    writeln!(w, "{head}\tanchor_id")?;
    for (k, a) in rows {
        writeln!(w, "{k}\t{a}")?;
    }
    Ok(())
}

fn parse_anchor_table(text: &str) -> Result<BTreeMap<u64, AnchorId>> {
    let mut out = BTreeMap::new();
    for (n, line) in data_lines(text).skip(1) {
        let toks: Vec<&str> = line.split('\t').collect();
        if toks.len() != 2 {
            return Err(Error::parse(n, "anchor line needs `id<TAB>anchor_id`"));
        }
        out.insert(field(toks[0], n, "id")?, AnchorId(field(toks[1], n, "anchor id")?));
    }
    Ok(out)
}

pub fn parse_partition(node_text: &str, edge_text: &str, summary: &AnchorSummary) -> Result<AnchorPartition> {
    let node_to_anchor = parse_anchor_table(node_text)?
        .into_iter()
        .map(|(k, a)| (NodeId(k), a))
        .collect();
    let edge_to_anchor: BTreeMap<EdgeId, AnchorId> = parse_anchor_table(edge_text)?
        .into_iter()
        .map(|(k, a)| (EdgeId(k), a))
        .collect();
    if let Some(a) = edge_to_anchor.values().find(|a| a.0 as usize >= summary.anchor_count) {
        return Err(Error::UnknownAnchor(a.0));
    }
    Ok(AnchorPartition {
        node_to_anchor,
        edge_to_anchor,
        anchor_count: summary.anchor_count,
        modularity: summary.modularity,
        history: summary.history.clone(),
    })
}

pub fn write_choice_sets(sets: &[ChoiceSet], w: &mut dyn Write) -> std::io::Result<()> {
    for s in sets {
        let line = serde_json::to_string(s).map_err(std::io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn parse_choice_sets(text: &str) -> Result<Vec<ChoiceSet>> {
    data_lines(text)
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::parse(n, e.to_string())))
        .collect()
}

const FEATURE_PREFIX: [&str; 9] = [
    "obs",
    "origin",
    "destination",
    "route",
    "chosen",
    "multiplicity",
    "depart",
    "occupied",
    "chosen_length_m",
];

/// One row per (observation, route) with every column, the chosen flag and
/// sparse `nest:share` memberships. A leading comment records the nest count.
pub fn write_features(data: &Dataset, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "# nests {}", data.n_nests)?;
    write!(w, "{}", FEATURE_PREFIX.join("\t"))?;
    for n in &data.feature_names {
        write!(w, "\t{n}")?;
    }
    writeln!(w, "\tln_ps\talpha")?;
    for o in &data.observations {
        for (i, r) in o.routes.iter().enumerate() {
            write!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                o.id,
                o.od.0,
                o.od.1,
                i,
                u8::from(i == o.chosen),
                o.multiplicity.get(i).copied().unwrap_or(0),
                opt_num(o.depart),
                o.occupied.map_or("NA".into(), |b| u8::from(b).to_string()),
                o.chosen_length,
            )?;
            for x in &r.x {
                write!(w, "\t{x}")?;
            }
            let alpha: Vec<String> = r.alpha.iter().map(|(m, a)| format!("{m}:{a}")).collect();
            writeln!(w, "\t{}\t{}", r.ln_ps, alpha.join(";"))?;
        }
    }
    Ok(())
}

pub fn parse_features(text: &str) -> Result<Dataset> {
    let mut n_nests: Option<usize> = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(v) = line.strip_prefix("# nests ") {
            n_nests = Some(v.trim().parse().map_err(|_| Error::parse(1, "invalid nest count"))?);
        }
    }
    let mut lines = data_lines(text);
    let (hn, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
    let cols: Vec<&str> = header.split('\t').collect();
    let np = FEATURE_PREFIX.len();
    if cols.len() < np + 2 || cols[..np] != FEATURE_PREFIX || cols[cols.len() - 2..] != ["ln_ps", "alpha"] {
        return Err(Error::parse(hn, "unexpected features header"));
    }
    let names: Vec<String> = cols[np..cols.len() - 2].iter().map(|s| s.to_string()).collect();
    let k = names.len();
    let mut observations: Vec<Observation> = Vec::new();
    let mut max_nest = 0u32;
    for (n, line) in lines {
        let t: Vec<&str> = line.split('\t').collect();
        if t.len() != cols.len() {
            return Err(Error::parse(n, format!("expected {} fields, found {}", cols.len(), t.len())));
        }
        let id: usize = field(t[0], n, "observation id")?;
        let route: usize = field(t[3], n, "route index")?;
        let x = t[np..np + k]
            .iter()
            .map(|v| field::<f64>(v, n, "feature"))
            .collect::<Result<Vec<_>>>()?;
        let ln_ps: f64 = field(t[np + k], n, "ln_ps")?;
        let mut alpha = Vec::new();
        for pair in t[np + k + 1].split(';').filter(|s| !s.is_empty()) {
            let (m, a) = pair
                .split_once(':')
                .ok_or_else(|| Error::parse(n, format!("invalid membership '{pair}'")))?;
            let m: u32 = field(m, n, "nest")?;
            max_nest = max_nest.max(m);
            alpha.push((m, field(a, n, "membership")?));
        }
        let rf = RouteFeatures { x, ln_ps, alpha };
        let new_obs = observations.last().is_none_or(|o| o.id != id);
        if new_obs {
            if route != 0 {
                return Err(Error::parse(n, "observation must start at route 0"));
            }
            observations.push(Observation {
                id,
                od: (NodeId(field(t[1], n, "origin")?), NodeId(field(t[2], n, "destination")?)),
                routes: Vec::new(),
                chosen: usize::MAX,
                multiplicity: Vec::new(),
                depart: if t[6] == "NA" { None } else { Some(field(t[6], n, "depart")?) },
                occupied: match t[7] {
                    "NA" => None,
                    "1" => Some(true),
                    "0" => Some(false),
                    v => return Err(Error::parse(n, format!("invalid occupied flag '{v}'"))),
                },
                chosen_length: field(t[8], n, "chosen length")?,
            });
        }
        let o = observations.last_mut().unwrap();
        if route != o.routes.len() {
            return Err(Error::parse(n, format!("route index {route} out of order")));
        }
        match t[4] {
            "1" if o.chosen == usize::MAX => o.chosen = route,
            "1" => return Err(Error::parse(n, format!("observation {id} has two chosen routes"))),
            "0" => {}
            v => return Err(Error::parse(n, format!("invalid chosen flag '{v}'"))),
        }
        o.multiplicity.push(field(t[5], n, "multiplicity")?);
        o.routes.push(rf);
    }
    if let Some(o) = observations.iter().find(|o| o.chosen == usize::MAX) {
        return Err(Error::InvalidInput(format!("observation {} has no chosen route", o.id)));
    }
    let n_nests = n_nests.unwrap_or(max_nest as usize + 1);
    if max_nest as usize >= n_nests {
        return Err(Error::UnknownAnchor(max_nest));
    }
    Ok(Dataset {
        feature_names: names,
        n_nests,
        variant: None,
        units: crate::features::default_units(),
        observations,
    })
}

pub fn read_features(path: &Path) -> Result<Dataset> {
    parse_features(&read_text(path)?)
}
