//! Synthetic cities and simulated route choices with known parameters.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{louvain, AnchorPartition, LouvainOptions};
use crate::choiceset::{build_choice_set, ChoiceSet, ChoiceSetOptions, ObservationMeta, PathWeight, Route};
use crate::cnpsl::{choice_probabilities, logit, ModelSpec, Params, ScaleMode};
use crate::complexity::{compute_factor_table, dummy_code, ComplexityParams, DummyTable, FactorTable};
use crate::error::{Error, Result};
use crate::features::{build_full_dataset, full_feature_names, Dataset, FeatureContext, ModelVariant, TurnPenalties};
use crate::netgraph::{Building, CategorySet, Edge, EdgeId, HexGrid, Node, NodeId, Poi, Point, RoadNetwork, Trip};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CityConfig {
    pub rows: usize,
    pub cols: usize,
    /// meters between lattice nodes
    pub spacing: f64,
    /// faster, longer peripheral edges
    pub ring: bool,
    pub seed: u64,
    /// node positions are displaced by up to this fraction of the spacing
    pub jitter: f64,
    /// every n-th row and column is an arterial; 0 disables arterials
    pub arterial_every: usize,
    pub arterial_speedup: f64,
    pub ring_speedup: f64,
    /// ring edge length over its chord
    pub ring_stretch: f64,
    /// m/s
    pub min_speed: f64,
    pub max_speed: f64,
}

impl Default for CityConfig {
    fn default() -> Self {
        CityConfig {
            rows: 10,
            cols: 10,
            spacing: 300.0,
            ring: true,
            seed: 1,
            jitter: 0.1,
            arterial_every: 3,
            arterial_speedup: 1.5,
            ring_speedup: 2.0,
            ring_stretch: 1.25,
            min_speed: 7.0,
            max_speed: 13.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct City {
    /// every edge carries its true speed
    pub network: RoadNetwork,
    pub buildings: Vec<Building>,
    pub pois: Vec<Poi>,
    pub categories: CategorySet,
    /// edges on the peripheral ring
    pub ring_edges: Vec<EdgeId>,
}

/// Lattice city with default jitter, arterials and speeds.
pub fn make_grid_city(rows: usize, cols: usize, spacing: f64, ring: bool, seed: u64) -> Result<City> {
    make_city(&CityConfig {
        rows,
        cols,
        spacing,
        ring,
        seed,
        ..CityConfig::default()
    })
}

pub fn make_city(cfg: &CityConfig) -> Result<City> {
    if cfg.rows < 2 || cfg.cols < 2 {
        return Err(Error::InvalidInput("a grid city needs at least 2 rows and 2 columns".into()));
    }
    if !(cfg.spacing > 0.0) || !(cfg.min_speed > 0.0) || cfg.max_speed < cfg.min_speed {
        return Err(Error::InvalidInput("spacing and speeds must be positive".into()));
    }
    if cfg.ring && !(cfg.ring_stretch >= 1.0) {
        return Err(Error::InvalidInput("ring stretch must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.spacing;
    let id_of = |r: usize, c: usize| NodeId((r * cfg.cols + c + 1) as u64);

    let mut pos = vec![vec![Point::new(0.0, 0.0); cfg.cols]; cfg.rows];
    let mut nodes = Vec::with_capacity(cfg.rows * cfg.cols);
    for (r, row) in pos.iter_mut().enumerate() {
        for (c, p) in row.iter_mut().enumerate() {
            let dx = rng.gen_range(-1.0..=1.0) * cfg.jitter * s;
            let dy = rng.gen_range(-1.0..=1.0) * cfg.jitter * s;
            *p = Point::new(c as f64 * s + dx, r as f64 * s + dy);
            nodes.push(Node { id: id_of(r, c), pos: *p });
        }
    }

    let center = Point::new((cfg.cols - 1) as f64 * s / 2.0, (cfg.rows - 1) as f64 * s / 2.0);
    let on_ring = |(r0, c0): (usize, usize), (r1, c1): (usize, usize)| {
        cfg.ring
            && ((r0 == r1 && (r0 == 0 || r0 == cfg.rows - 1)) || (c0 == c1 && (c0 == 0 || c0 == cfg.cols - 1)))
    };
    let arterial = |(r0, c0): (usize, usize), (r1, c1): (usize, usize)| {
        cfg.arterial_every > 0
            && ((r0 == r1 && r0 % cfg.arterial_every == 0) || (c0 == c1 && c0 % cfg.arterial_every == 0))
    };

    let mut pairs = Vec::new();
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            if c + 1 < cfg.cols {
                pairs.push(((r, c), (r, c + 1)));
            }
            if r + 1 < cfg.rows {
                pairs.push(((r, c), (r + 1, c)));
            }
        }
    }

    let mut edges = Vec::with_capacity(pairs.len() * 2);
    let mut ring_edges = Vec::new();
    let mut next_id = 1u64;
    for (a, b) in pairs {
        let pa = pos[a.0][a.1];
        let pb = pos[b.0][b.1];
        let chord = pa.dist(&pb);
        let ring = on_ring(a, b);
        let (length, geometry) = if ring {
            // bulge the midpoint outward so the polyline has the stretched length
            let length = chord * cfg.ring_stretch;
            let h = chord / 2.0 * (cfg.ring_stretch * cfg.ring_stretch - 1.0).sqrt();
            let mid = pa.lerp(&pb, 0.5);
            let (mut nx, mut ny) = (-(pb.y - pa.y) / chord, (pb.x - pa.x) / chord);
            if nx * (mid.x - center.x) + ny * (mid.y - center.y) < 0.0 {
                nx = -nx;
                ny = -ny;
            }
            let bulge = Point::new(mid.x + nx * h, mid.y + ny * h);
            (length, Some(vec![pa, bulge, pb]))
        } else {
            (chord, None)
        };
        let speedup = if ring {
            cfg.ring_speedup
        } else if arterial(a, b) {
            cfg.arterial_speedup
        } else {
            1.0
        };
        for (t, h, forward) in [(a, b, true), (b, a, false)] {
            let speed = rng.gen_range(cfg.min_speed..=cfg.max_speed) * speedup;
            let geometry = geometry.as_ref().map(|g| {
                let mut g = g.clone();
                if !forward {
                    g.reverse();
                }
                g
            });
            let id = EdgeId(next_id);
            next_id += 1;
            if ring {
                ring_edges.push(id);
            }
            edges.push(Edge {
                id,
                tail: id_of(t.0, t.1),
                head: id_of(h.0, h.1),
                length,
                speed: Some(speed),
                geometry,
            });
        }
    }
    let network = RoadNetwork::new(nodes, edges)?;

    let categories = CategorySet::default();
    let max_d = center.dist(&Point::new(0.0, 0.0)).max(1.0);
    let mut buildings = Vec::new();
    let mut pois = Vec::new();
    for r in 0..cfg.rows - 1 {
        for c in 0..cfg.cols - 1 {
            let corners = [pos[r][c], pos[r][c + 1], pos[r + 1][c + 1], pos[r + 1][c]];
            let bc = Point::new(
                corners.iter().map(|p| p.x).sum::<f64>() / 4.0,
                corners.iter().map(|p| p.y).sum::<f64>() / 4.0,
            );
            // 0 at the city center, 1 at its corners
            let d = (bc.dist(&center) / max_d).min(1.0);
            for (qx, qy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                if rng.gen::<f64>() > 0.85 - 0.5 * d {
                    continue;
                }
                let hw = rng.gen_range(0.05..0.17) * s;
                let hh = rng.gen_range(0.05..0.17) * s;
                let cx = bc.x + qx * 0.22 * s;
                let cy = bc.y + qy * 0.22 * s;
                let footprint = vec![
                    Point::new(cx - hw, cy - hh),
                    Point::new(cx + hw, cy - hh),
                    Point::new(cx + hw, cy + hh),
                    Point::new(cx - hw, cy + hh),
                ];
                let top = 2.0 + 28.0 * (1.0 - d).powi(2);
                let floors = rng.gen_range(1.0..=top).round() as u32;
                buildings.push(Building::new(footprint, floors.max(1), None)?);
            }
            let weights = [
                1.0 + 2.0 * d,
                0.2 + 3.0 * (1.0 - d).powi(2),
                if arterial((r, c), (r, c + 1)) || arterial((r, c), (r + 1, c)) { 1.5 } else { 0.3 },
                0.1 + 2.0 * (c as f64 / cfg.cols as f64) * (r as f64 / cfg.rows as f64),
                0.8,
                0.1 + 2.0 * d * d,
            ];
            let pick = WeightedIndex::new(weights).expect("positive weights");
            for _ in 0..rng.gen_range(2..=8) {
                let p = Point::new(
                    bc.x + rng.gen_range(-0.45..0.45) * s,
                    bc.y + rng.gen_range(-0.45..0.45) * s,
                );
                pois.push(Poi {
                    location: p,
                    category: pick.sample(&mut rng),
                });
            }
        }
    }
    Ok(City {
        network,
        buildings,
        pois,
        categories,
        ring_edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub hex_radius: f64,
    pub louvain: LouvainOptions,
    pub complexity: ComplexityParams,
    pub turns: TurnPenalties,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            hex_radius: 300.0,
            louvain: LouvainOptions::default(),
            complexity: ComplexityParams::default(),
            turns: TurnPenalties::default(),
        }
    }
}

/// A city with every derived layer needed to build features.
#[derive(Debug, Clone)]
pub struct World {
    pub city: City,
    pub grid: HexGrid,
    pub factors: FactorTable,
    pub dummies: DummyTable,
    pub partition: AnchorPartition,
    pub turns: TurnPenalties,
}

impl World {
    pub fn build(city: City, cfg: &WorldConfig) -> Result<World> {
        let grid = HexGrid::new(Point::new(0.0, 0.0), cfg.hex_radius)?;
        let factors = compute_factor_table(
            &city.network,
            &grid,
            &city.buildings,
            &city.pois,
            city.categories.len(),
            &cfg.complexity,
        )?;
        let dummies = dummy_code(&factors);
        let partition = louvain(&city.network, &cfg.louvain)?;
        Ok(World {
            city,
            grid,
            factors,
            dummies,
            partition,
            turns: cfg.turns,
        })
    }

    pub fn context(&self) -> FeatureContext<'_> {
        FeatureContext {
            net: &self.city.network,
            grid: &self.grid,
            dummies: &self.dummies,
            partition: &self.partition,
            turns: self.turns,
        }
    }
}

/// Generating parameters of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub variant: ModelVariant,
    pub scale: ScaleMode,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub beta_ps: f64,
    /// μ̃ per scale parameter (one when shared)
    pub mu: Vec<f64>,
}

impl GroundTruth {
    /// Coefficients of realistic magnitude for the full anchor model, with a
    /// shared nest scale of 0.5.
    pub fn model4_magnitudes() -> GroundTruth {
        GroundTruth {
            variant: ModelVariant::M4,
            scale: ScaleMode::Shared,
            names: full_feature_names(),
            beta: vec![
                0.687, -0.256, -0.051, -0.31, 0.12, -0.011, 0.003, 0.365, 0.532, 0.183, 0.321, 0.025, 0.263,
                -0.324, -0.107, 0.049,
            ],
            beta_ps: -0.649,
            mu: vec![0.5],
        }
    }

    pub fn spec(&self, n_nests: usize) -> ModelSpec {
        let anchored = self.variant.uses_anchors();
        ModelSpec {
            feature_names: self.names.clone(),
            n_nests: if anchored { n_nests } else { 1 },
            scale: if anchored { self.scale } else { ScaleMode::Fixed },
            variant: Some(self.variant),
            weight_by_multiplicity: false,
        }
    }

    pub fn params(&self, spec: &ModelSpec) -> Result<Params> {
        let theta: Vec<f64> = match spec.scale {
            ScaleMode::Fixed => vec![],
            ScaleMode::Shared => vec![logit(self.mu[0])],
            ScaleMode::PerNest if self.mu.len() == 1 => vec![logit(self.mu[0]); spec.n_nests],
            ScaleMode::PerNest => self.mu.iter().map(|&m| logit(m)).collect(),
        };
        let p = Params {
            beta: self.beta.clone(),
            beta_ps: self.beta_ps,
            theta,
        };
        p.check(spec)?;
        Ok(p)
    }

    /// Values in the fit's parameter order (μ̃ on its natural scale).
    pub fn as_estimates(&self, spec: &ModelSpec) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.beta_ps);
        match spec.scale {
            ScaleMode::Fixed => {}
            ScaleMode::Shared => v.push(self.mu[0]),
            ScaleMode::PerNest => v.extend((0..spec.n_nests).map(|m| self.mu[m.min(self.mu.len() - 1)])),
        }
        v
    }
}

/// Random OD pairs at least `min_separation` meters apart (straight line).
pub fn sample_ods(net: &RoadNetwork, n: usize, min_separation: f64, seed: u64) -> Result<Vec<(NodeId, NodeId)>> {
    let nodes = net.nodes();
    if nodes.len() < 2 {
        return Err(Error::EmptyNetwork);
    }
    let feasible = nodes
        .iter()
        .any(|a| nodes.iter().any(|b| a.pos.dist(&b.pos) >= min_separation && a.id != b.id));
    if !feasible {
        return Err(Error::InvalidInput(format!("no node pair is {min_separation} m apart")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = &nodes[rng.gen_range(0..nodes.len())];
        let b = &nodes[rng.gen_range(0..nodes.len())];
        if a.id != b.id && a.pos.dist(&b.pos) >= min_separation {
            out.push((a.id, b.id));
        }
    }
    Ok(out)
}

/// Choice sets seeded by each OD's fastest route. ODs whose set stays
/// undersized are skipped and counted.
pub fn choice_sets_for(world: &World, ods: &[(NodeId, NodeId)], opts: &ChoiceSetOptions) -> Result<(Vec<ChoiceSet>, usize)> {
    let net = &world.city.network;
    let results: Vec<Result<Option<ChoiceSet>>> = ods
        .par_iter()
        .map(|&(o, d)| {
            let first = crate::choiceset::k_shortest(net, o, d, 1, opts.weight)?;
            match build_choice_set(net, (o, d), &first, 0, opts) {
                Ok(set) => Ok(Some(set)),
                Err(Error::UndersizedChoiceSet { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut sets = Vec::with_capacity(ods.len());
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(s) => sets.push(s),
            None => skipped += 1,
        }
    }
    Ok((sets, skipped))
}

/// Derived per-observation stream so draws do not depend on scheduling.
fn observation_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

/// Replace each observation's chosen route by a draw from the model's
/// choice probabilities under `params`. `data` must match `spec`.
pub fn simulate_choices(data: &Dataset, spec: &ModelSpec, params: &Params, seed: u64) -> Result<Dataset> {
    let observations = data
        .observations
        .par_iter()
        .enumerate()
        .map(|(i, o)| {
            let p = choice_probabilities(&o.routes, params, spec)?;
            let chosen = WeightedIndex::new(&p)
                .map_err(|e| Error::InvalidInput(format!("observation {}: {e}", o.id)))?
                .sample(&mut observation_rng(seed, i));
            Ok(crate::features::Observation { chosen, ..o.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        observations,
        ..data.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_obs: usize,
    /// meters between origin and destination
    pub min_separation: f64,
    pub seed: u64,
    pub choice_set: ChoiceSetOptions,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_obs: 1000,
            min_separation: 1200.0,
            seed: 7,
            choice_set: ChoiceSetOptions {
                k_cap: 200,
                weight: PathWeight::Duration,
                ..ChoiceSetOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// choice sets with the simulated chosen route
    pub choice_sets: Vec<ChoiceSet>,
    /// all sixteen columns with anchor nests
    pub full: Dataset,
    pub truth: GroundTruth,
    /// ODs dropped because their choice set stayed undersized
    pub skipped: usize,
}

/// Sample ODs, build choice sets and draw choices from `truth`.
pub fn simulate(world: &World, truth: &GroundTruth, cfg: &SimulationConfig) -> Result<Simulation> {
    let mut sets = Vec::with_capacity(cfg.n_obs);
    let mut skipped = 0;
    let mut round = 0u64;
    while sets.len() < cfg.n_obs {
        let want = cfg.n_obs - sets.len();
        let ods = sample_ods(&world.city.network, want, cfg.min_separation, cfg.seed.wrapping_add(round))?;
        let (got, skip) = choice_sets_for(world, &ods, &cfg.choice_set)?;
        if got.is_empty() {
            return Err(Error::InvalidInput("no OD yields a full choice set".into()));
        }
        sets.extend(got);
        skipped += skip;
        round += 1;
    }
    let full = build_full_dataset(&world.context(), &sets)?;
    let projected = full.project(truth.variant)?;
    let spec = truth.spec(full.n_nests);
    let params = truth.params(&spec)?;
    let simulated = simulate_choices(&projected, &spec, &params, cfg.seed)?;

    let mut full = full;
    for ((o, s), sim) in full.observations.iter_mut().zip(sets.iter_mut()).zip(&simulated.observations) {
        o.chosen = sim.chosen;
        s.chosen = sim.chosen;
    }
    Ok(Simulation {
        choice_sets: sets,
        full,
        truth: truth.clone(),
        skipped,
    })
}

/// Trips driving the simulated chosen routes, with noisy speed samples on a
/// share of their edges.
pub fn trips_from_simulation(net: &RoadNetwork, sim: &Simulation, sample_share: f64, seed: u64) -> Result<Vec<Trip>> {
    let truth: BTreeMap<EdgeId, f64> = net
        .edges()
        .iter()
        .map(|e| (e.id, e.speed.ok_or(Error::MissingSpeed(e.id)).unwrap_or(0.0)))
        .collect();
    sim.choice_sets
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let mut rng = observation_rng(seed, i);
            let route: &Route = &set.routes[set.chosen];
            let mut samples = Vec::new();
            for e in &route.edges {
                if rng.gen::<f64>() < sample_share {
                    let v = truth[e];
                    if v <= 0.0 {
                        return Err(Error::MissingSpeed(*e));
                    }
                    samples.push((*e, v * rng.gen_range(0.85..1.15)));
                }
            }
            Ok(Trip {
                edges: route.edges.clone(),
                depart: rng.gen_range(0.0..86_400.0f64).floor(),
                occupied: rng.gen_bool(0.6),
                speed_samples: samples,
            })
        })
        .collect()
}

/// Observation metadata carried over from trips.
pub fn meta_of(trip: &Trip) -> ObservationMeta {
    ObservationMeta {
        depart: Some(trip.depart),
        occupied: Some(trip.occupied),
    }
}
