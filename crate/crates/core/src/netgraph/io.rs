//! Text formats for networks, buildings, POIs and trips.
//!
//! Network files hold `N id x y` node lines, `E id tail head length [speed]`
//! edge lines and optional `G id x1 y1 x2 y2 ...` edge-geometry lines.
//! Fields are whitespace-delimited; lines starting with `#` are comments.
//! Floats are written in shortest round-trip form, so write→read is exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Building, CategorySet, Edge, EdgeId, Node, NodeId, Point, Poi, RoadNetwork, Trip};
use crate::error::{Error, Result};

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{tok}'")))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<RoadNetwork> {
    let path = path.as_ref();
    parse_network(&read_lines(path)?.join("\n"))
}

pub fn parse_network(text: &str) -> Result<RoadNetwork> {
    let mut nodes = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut geometry: BTreeMap<EdgeId, (usize, Vec<Point>)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "N" => {
                if toks.len() != 4 {
                    return Err(Error::parse(line_no, "node line needs `N id x y`"));
                }
                nodes.push(Node {
                    id: NodeId(num(toks[1], line_no, "node id")?),
                    pos: Point::new(num(toks[2], line_no, "x")?, num(toks[3], line_no, "y")?),
                });
            }
            "E" => {
                if toks.len() != 5 && toks.len() != 6 {
                    return Err(Error::parse(line_no, "edge line needs `E id tail head length [speed]`"));
                }
                let speed = match toks.get(5) {
                    Some(t) => Some(num::<f64>(t, line_no, "speed")?),
                    None => None,
                };
                edges.push(Edge {
                    id: EdgeId(num(toks[1], line_no, "edge id")?),
                    tail: NodeId(num(toks[2], line_no, "tail")?),
                    head: NodeId(num(toks[3], line_no, "head")?),
                    length: num(toks[4], line_no, "length")?,
                    speed,
                    geometry: None,
                });
            }
            "G" => {
                if toks.len() < 6 || toks.len() % 2 != 0 {
                    return Err(Error::parse(line_no, "geometry line needs `G id x1 y1 x2 y2 ...`"));
                }
                let id = EdgeId(num(toks[1], line_no, "edge id")?);
                let pts = toks[2..]
                    .chunks(2)
                    .map(|c| Ok(Point::new(num(c[0], line_no, "x")?, num(c[1], line_no, "y")?)))
                    .collect::<Result<Vec<_>>>()?;
                geometry.insert(id, (line_no, pts));
            }
            other => return Err(Error::parse(line_no, format!("unknown record type '{other}'"))),
        }
    }
    for (id, (line_no, pts)) in geometry {
        let e = edges
            .iter_mut()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::parse(line_no, format!("geometry for unknown edge {id}")))?;
        e.geometry = Some(pts);
    }
    RoadNetwork::new(nodes, edges)
}

pub fn write_network(net: &RoadNetwork, mut w: impl Write) -> std::io::Result<()> {
    for n in net.nodes() {
        writeln!(w, "N {} {} {}", n.id, n.pos.x, n.pos.y)?;
    }
    for e in net.edges() {
        match e.speed {
            Some(v) => writeln!(w, "E {} {} {} {} {}", e.id, e.tail, e.head, e.length, v)?,
            None => writeln!(w, "E {} {} {} {}", e.id, e.tail, e.head, e.length)?,
        }
    }
    for e in net.edges() {
        if let Some(g) = &e.geometry {
            write!(w, "G {}", e.id)?;
            for p in g {
                write!(w, " {} {}", p.x, p.y)?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn save_network(net: &RoadNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_network(net, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct BuildingRecord {
    footprint: Vec<[f64; 2]>,
    floors: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    perimeter: Option<f64>,
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-300)
}

pub fn parse_buildings(text: &str) -> Result<Vec<Building>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: BuildingRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let ring = rec.footprint.iter().map(|p| Point::new(p[0], p[1])).collect();
        let b = Building::new(ring, rec.floors, rec.height).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if let Some(a) = rec.area {
            if !rel_close(a, b.area) {
                return Err(Error::parse(i + 1, format!("declared area {a} disagrees with footprint {}", b.area)));
            }
        }
        if let Some(p) = rec.perimeter {
            if !rel_close(p, b.perimeter) {
                return Err(Error::parse(
                    i + 1,
                    format!("declared perimeter {p} disagrees with footprint {}", b.perimeter),
                ));
            }
        }
        out.push(b);
    }
    Ok(out)
}

pub fn load_buildings(path: impl AsRef<Path>) -> Result<Vec<Building>> {
    let path = path.as_ref();
    parse_buildings(&read_lines(path)?.join("\n"))
}

pub fn write_buildings(buildings: &[Building], mut w: impl Write) -> Result<()> {
    for b in buildings {
        let rec = BuildingRecord {
            footprint: b.footprint.iter().map(|p| [p.x, p.y]).collect(),
            floors: b.floors,
            height: b.height,
            area: Some(b.area),
            perimeter: Some(b.perimeter),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w).map_err(|e| Error::io("<buildings>", e))?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PoiRecord {
    location: [f64; 2],
    category: String,
}

pub fn parse_pois(text: &str, categories: &CategorySet) -> Result<Vec<Poi>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: PoiRecord = serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let location = Point::new(rec.location[0], rec.location[1]);
        if !location.is_finite() {
            return Err(Error::parse(i + 1, "non-finite POI location"));
        }
        out.push(Poi {
            location,
            category: categories.resolve(&rec.category)?,
        });
    }
    Ok(out)
}

pub fn load_pois(path: impl AsRef<Path>, categories: &CategorySet) -> Result<Vec<Poi>> {
    let path = path.as_ref();
    parse_pois(&read_lines(path)?.join("\n"), categories)
}

pub fn write_pois(pois: &[Poi], categories: &CategorySet, mut w: impl Write) -> Result<()> {
    for p in pois {
        let rec = PoiRecord {
            location: [p.location.x, p.location.y],
            category: categories.names()[p.category].clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w).map_err(|e| Error::io("<pois>", e))?;
    }
    Ok(())
}

/// Parse trip records `T depart occupied e1,e2,... [e:speed,e:speed,...]`
/// and check each trip's connectivity against `net`.
pub fn parse_trips(text: &str, net: &RoadNetwork) -> Result<Vec<Trip>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks[0] != "T" || !(toks.len() == 4 || toks.len() == 5) {
            return Err(Error::parse(line_no, "trip line needs `T depart occupied edges [samples]`"));
        }
        let depart: f64 = num(toks[1], line_no, "depart")?;
        let occupied = match toks[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::parse(line_no, format!("invalid occupied flag '{other}'"))),
        };
        let edges = toks[3]
            .split(',')
            .map(|t| Ok(EdgeId(num(t, line_no, "edge id")?)))
            .collect::<Result<Vec<_>>>()?;
        let mut speed_samples = Vec::new();
        if let Some(samples) = toks.get(4) {
            for s in samples.split(',') {
                let (e, v) = s
                    .split_once(':')
                    .ok_or_else(|| Error::parse(line_no, format!("invalid speed sample '{s}'")))?;
                speed_samples.push((EdgeId(num(e, line_no, "edge id")?), num(v, line_no, "speed")?));
            }
        }
        net.route_indices(&edges).map_err(|e| Error::parse(line_no, e.to_string()))?;
        out.push(Trip {
            edges,
            depart,
            occupied,
            speed_samples,
        });
    }
    Ok(out)
}

pub fn load_trips(path: impl AsRef<Path>, net: &RoadNetwork) -> Result<Vec<Trip>> {
    let path = path.as_ref();
    parse_trips(&read_lines(path)?.join("\n"), net)
}

pub fn write_trips(trips: &[Trip], mut w: impl Write) -> std::io::Result<()> {
    for t in trips {
        let edges: Vec<String> = t.edges.iter().map(|e| e.to_string()).collect();
        write!(w, "T {} {} {}", t.depart, u8::from(t.occupied), edges.join(","))?;
        if !t.speed_samples.is_empty() {
            let s: Vec<String> = t.speed_samples.iter().map(|(e, v)| format!("{e}:{v}")).collect();
            write!(w, " {}", s.join(","))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
