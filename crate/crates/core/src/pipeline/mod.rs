//! End-to-end workflow: speeds, metrics, anchors, choice sets, features and
//! fitting, each writing its artifacts, followed by a manifest of hashes.

pub mod artifacts;
mod config;
mod stratify;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{cohesion_report, louvain, AnchorPartition};
use crate::choiceset::{build_choice_set, group_by_od, ChoiceSet, ObservationMeta, Route};
use crate::cnpsl::{fit, Comparison, FitOptions, FitResult, ModelSpec};
use crate::complexity::{compute_factor_table, dummy_code, vif, ComplexityParams, Factor, VifReport};
use crate::error::{Error, Result};
use crate::features::{build_full_dataset, Dataset, FeatureContext, ModelVariant};
use crate::netgraph::io::{load_buildings, load_network, load_pois, load_trips, save_network, write_buildings, write_pois, write_trips};
use crate::netgraph::{filter_trips, CategorySet, HexGrid, Point, RoadNetwork, Trip};
use crate::synth::{make_city, simulate, trips_from_simulation, GroundTruth, World, WorldConfig};
use crate::traffic::{estimate_speeds, fill_missing_speeds};

use artifacts::*;
pub use config::{FitConfig, InputConfig, MetricsConfig, OutputConfig, PipelineConfig, RunConfig, SpeedConfig, SynthConfig};
pub use stratify::{stratify, StrataBounds, StratifyBy, Stratum, UNKNOWN};

/// Run `f` on a pool of `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub truth: GroundTruth,
    pub config: SynthConfig,
    pub anchor_count: usize,
    pub observations: usize,
    pub skipped_ods: usize,
}

/// Generate a synthetic city and simulated trips into `dir` as
/// `network.txt` (no speeds), `buildings.jsonl`, `pois.jsonl`, `trips.txt`
/// and `ground_truth.json`.
pub fn generate_synthetic(cfg: &SynthConfig, dir: &Path) -> Result<InputConfig> {
    let city = make_city(&cfg.city)?;
    let world = World::build(
        city,
        &WorldConfig {
            hex_radius: cfg.hex_radius,
            ..WorldConfig::default()
        },
    )?;
    let truth = GroundTruth::model4_magnitudes();
    let sim = simulate(&world, &truth, &cfg.simulation)?;
    let net = &world.city.network;
    let trips = trips_from_simulation(net, &sim, cfg.sample_share, cfg.simulation.seed)?;

    let bare = RoadNetwork::new(
        net.nodes().to_vec(),
        net.edges()
            .iter()
            .map(|e| crate::netgraph::Edge { speed: None, ..e.clone() })
            .collect(),
    )?;
    let paths = InputConfig {
        network: dir.join("network.txt"),
        trips: dir.join("trips.txt"),
        buildings: Some(dir.join("buildings.jsonl")),
        pois: Some(dir.join("pois.jsonl")),
        categories: None,
        category_mapping: BTreeMap::new(),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_network(&bare, &paths.network)?;
    write_file(&paths.trips, |w| write_trips(&trips, w))?;
    let cats = &world.city.categories;
    let mut buf = Vec::new();
    write_buildings(&world.city.buildings, &mut buf)?;
    write_file(paths.buildings.as_ref().unwrap(), |w| w.write_all(&buf))?;
    buf.clear();
    write_pois(&world.city.pois, cats, &mut buf)?;
    write_file(paths.pois.as_ref().unwrap(), |w| w.write_all(&buf))?;
    write_json(
        &dir.join("ground_truth.json"),
        &SynthSummary {
            truth,
            config: *cfg,
            anchor_count: world.partition.anchor_count,
            observations: sim.choice_sets.len(),
            skipped_ods: sim.skipped,
        },
    )?;
    Ok(paths)
}

/// Choice sets for filtered trips, one per OD: the first trip's route is
/// the chosen one and later trips of the same OD are merged or added as
/// observed alternatives. ODs that stay undersized are skipped.
pub fn choice_sets_from_trips(
    net: &RoadNetwork,
    trips: &[Trip],
    opts: &crate::choiceset::ChoiceSetOptions,
) -> Result<(Vec<ChoiceSet>, usize)> {
    let routes: Vec<(Route, ObservationMeta)> = trips
        .iter()
        .map(|t| Ok((Route::from_edges(net, t.edges.clone())?, crate::synth::meta_of(t))))
        .collect::<Result<_>>()?;
    let meta_by_od: BTreeMap<_, ObservationMeta> = routes
        .iter()
        .rev()
        .map(|(r, m)| ((r.origin, r.destination), *m))
        .collect();
    let groups: Vec<_> = group_by_od(routes.into_iter().map(|(r, _)| r).collect())
        .into_iter()
        .filter(|(od, _)| od.0 != od.1)
        .collect();
    let built: Vec<Result<Option<ChoiceSet>>> = groups
        .par_iter()
        .map(|(od, observed)| match build_choice_set(net, *od, observed, 0, opts) {
            Ok(mut s) => {
                s.meta = meta_by_od[od];
                Ok(Some(s))
            }
            Err(Error::UndersizedChoiceSet { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut sets = Vec::new();
    let mut skipped = 0;
    for b in built {
        match b? {
            Some(s) => sets.push(s),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} OD pairs could not reach the minimum choice-set size");
    }
    Ok((sets, skipped))
}

/// Collinearity diagnostics over the complexity columns of every route.
pub fn complexity_vif(data: &Dataset) -> Result<VifReport> {
    let names: Vec<String> = Factor::ALL.iter().map(|f| f.to_string()).collect();
    let start = data
        .feature_names
        .iter()
        .position(|n| *n == names[0])
        .ok_or_else(|| Error::InvalidInput("dataset has no complexity columns".into()))?;
    if data.feature_names.get(start..start + names.len()) != Some(&names[..]) {
        return Err(Error::InvalidInput("dataset has no complexity columns".into()));
    }
    let rows: Vec<Vec<f64>> = data
        .observations
        .iter()
        .flat_map(|o| &o.routes)
        .map(|r| r.x[start..start + names.len()].to_vec())
        .collect();
    vif(&names, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumFit {
    pub label: String,
    pub observations: usize,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

/// Fit `variant` independently within each stratum of a full dataset.
pub fn stratified_fits(
    full: &Dataset,
    variant: ModelVariant,
    by: StratifyBy,
    bounds: &StrataBounds,
    opts: &FitOptions,
) -> Result<Vec<StratumFit>> {
    let data = full.project(variant)?;
    stratify(&data, by, bounds)?
        .into_iter()
        .map(|s| {
            let n = s.data.observations.len();
            let mut spec = ModelSpec::for_dataset(&s.data, opts.scale);
            spec.weight_by_multiplicity = opts.weight_by_multiplicity;
            let (fit, error) = match fit(&s.data, &spec, opts) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(StratumFit {
                label: s.label,
                observations: n,
                fit,
                error,
            })
        })
        .collect()
}

pub fn fit_variants(full: &Dataset, variants: &[ModelVariant], opts: &FitOptions) -> Result<Comparison> {
    let fits = variants
        .iter()
        .map(|&v| {
            let data = full.project(v)?;
            let mut spec = ModelSpec::for_dataset(&data, opts.scale);
            spec.weight_by_multiplicity = opts.weight_by_multiplicity;
            fit(&data, &spec, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { fits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// resolved configuration without output location and thread count
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, FileDigest>,
    /// output file name → sha256
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub comparison: Comparison,
    pub partition: AnchorPartition,
    pub dataset: Dataset,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Run every stage, honoring `[run] threads`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    if cfg.run.threads > 0 {
        with_threads(cfg.run.threads, || run_stages(cfg))?
    } else {
        run_stages(cfg)
    }
}

fn rel_name(path: &Path, out: &Path) -> String {
    path.strip_prefix(out).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

fn run_stages(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut counts = BTreeMap::new();

    let input = match (&cfg.input, &cfg.synth) {
        (_, Some(s)) => stage("synth", generate_synthetic(s, &out.join("input")))?,
        (Some(i), None) => InputConfig {
            network: cfg.resolve(&i.network),
            trips: cfg.resolve(&i.trips),
            buildings: i.buildings.as_ref().map(|p| cfg.resolve(p)),
            pois: i.pois.as_ref().map(|p| cfg.resolve(p)),
            ..i.clone()
        },
        (None, None) => return Err(Error::Config("either [input] or [synth] is required".into())),
    };

    let (net, categories, buildings, pois, trips) = stage("input", (|| {
        let net = load_network(&input.network)?;
        let categories = match &input.categories {
            Some(names) => CategorySet::new(names.clone())?,
            None => CategorySet::default(),
        }
        .with_mapping(input.category_mapping.clone())?;
        let buildings = match &input.buildings {
            Some(p) => load_buildings(p)?,
            None => Vec::new(),
        };
        let pois = match &input.pois {
            Some(p) => load_pois(p, &categories)?,
            None => Vec::new(),
        };
        let trips = load_trips(&input.trips, &net)?;
        Ok((net, categories, buildings, pois, trips))
    })())?;
    counts.insert("nodes".into(), net.node_count());
    counts.insert("edges".into(), net.edge_count());
    counts.insert("trips".into(), trips.len());

    let net = stage("speeds", (|| {
        let measured = estimate_speeds(&net, &trips)?;
        let filled = fill_missing_speeds(&net, &measured)?;
        counts.insert("edges_with_samples".into(), measured.len());
        counts.insert("edges_global_fallback".into(), filled.global_fallback.len());
        let p = out.join("speeds.tsv");
        write_file(&p, |w| write_speeds(&filled.speeds, w))?;
        outputs.push(p);
        net.with_speeds(&filled.speeds, cfg.speeds.floor)
    })())?;

    let grid = HexGrid::new(Point::new(cfg.metrics.hex_origin[0], cfg.metrics.hex_origin[1]), cfg.metrics.hex_radius)
        .map_err(|e| e.in_stage("metrics"))?;
    let dummies = stage("metrics", (|| {
        let params = ComplexityParams { sky: cfg.metrics.sky };
        let table = compute_factor_table(&net, &grid, &buildings, &pois, categories.len(), &params)?;
        let dummies = dummy_code(&table);
        let p = out.join("metrics_nodes.tsv");
        write_file(&p, |w| write_node_metrics(&table, &dummies, w))?;
        outputs.push(p);
        let p = out.join("metrics_cells.tsv");
        write_file(&p, |w| write_cell_metrics(&table, &dummies, w))?;
        outputs.push(p);
        let p = out.join("metrics_meta.json");
        write_json(&p, &MetricsMeta::new(&grid, cfg.metrics.sky, &dummies))?;
        outputs.push(p);
        Ok(dummies)
    })())?;

    let partition = stage("anchors", (|| {
        let partition = louvain(&net, &cfg.anchors)?;
        let cohesion = cohesion_report(&partition, &net)?;
        let p = out.join("anchors_nodes.tsv");
        write_file(&p, |w| write_anchor_table("node_id", &partition.node_to_anchor, w))?;
        outputs.push(p);
        let p = out.join("anchors_edges.tsv");
        write_file(&p, |w| write_anchor_table("edge_id", &partition.edge_to_anchor, w))?;
        outputs.push(p);
        let p = out.join("anchors.json");
        write_json(
            &p,
            &AnchorSummary {
                anchor_count: partition.anchor_count,
                modularity: partition.modularity,
                history: partition.history.clone(),
                cohesion,
            },
        )?;
        outputs.push(p);
        Ok(partition)
    })())?;
    counts.insert("anchors".into(), partition.anchor_count);

    let sets = stage("choiceset", (|| {
        let kept = filter_trips(&trips, &net, &cfg.trips)?;
        counts.insert("trips_kept".into(), kept.len());
        let (sets, skipped) = choice_sets_from_trips(&net, &kept, &cfg.choiceset)?;
        counts.insert("choice_sets".into(), sets.len());
        counts.insert("undersized_ods".into(), skipped);
        if sets.is_empty() {
            return Err(Error::InvalidInput("no choice set reached the minimum size".into()));
        }
        let p = out.join("choicesets.jsonl");
        write_file(&p, |w| write_choice_sets(&sets, w))?;
        outputs.push(p);
        Ok(sets)
    })())?;

    let dataset = stage("features", (|| {
        let ctx = FeatureContext {
            net: &net,
            grid: &grid,
            dummies: &dummies,
            partition: &partition,
            turns: cfg.features,
        };
        let data = build_full_dataset(&ctx, &sets)?;
        let p = out.join("features.tsv");
        write_file(&p, |w| write_features(&data, w))?;
        outputs.push(p);
        let p = out.join("vif.json");
        match complexity_vif(&data) {
            Ok(r) => write_json(&p, &r)?,
            Err(e) => write_json(&p, &BTreeMap::from([("error", e.to_string())]))?,
        }
        outputs.push(p);
        Ok(data)
    })())?;

    let comparison = stage("fit", (|| {
        let opts = cfg.fit_options();
        let comparison = fit_variants(&dataset, &cfg.fit.variants, &opts)?;
        let p = out.join("fit.json");
        write_json(&p, &comparison)?;
        outputs.push(p);
        let p = out.join("fit_table.txt");
        let table = comparison.table();
        write_file(&p, |w| w.write_all(table.as_bytes()))?;
        outputs.push(p);
        if let Some(by) = cfg.fit.stratify {
            let strata = stratified_fits(&dataset, cfg.fit.stratify_variant, by, &cfg.fit.strata, &opts)?;
            let p = out.join("strata_fit.json");
            write_json(&p, &strata)?;
            outputs.push(p);
        }
        Ok(comparison)
    })())?;

    let manifest = stage("manifest", (|| {
        let mut inputs = BTreeMap::new();
        let mut add = |key: &str, p: &Path| -> Result<()> {
            let shown = if cfg.synth.is_some() {
                rel_name(p, &out)
            } else {
                rel_name(p, &cfg.base_dir)
            };
            inputs.insert(
                key.to_string(),
                FileDigest {
                    path: shown,
                    sha256: sha256_file(p)?,
                },
            );
            Ok(())
        };
        add("network", &input.network)?;
        add("trips", &input.trips)?;
        if let Some(p) = &input.buildings {
            add("buildings", p)?;
        }
        if let Some(p) = &input.pois {
            add("pois", p)?;
        }
        if cfg.synth.is_some() {
            add("ground_truth", &out.join("input").join("ground_truth.json"))?;
        }
        let mut config = serde_json::to_value(cfg)?;
        if let Some(obj) = config.as_object_mut() {
            obj.remove("output");
            obj.remove("run");
        }
        let outputs = outputs
            .iter()
            .map(|p| Ok((rel_name(p, &out), sha256_file(p)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs,
            outputs,
            counts,
        };
        write_json(&out.join("manifest.json"), &manifest)?;
        Ok(manifest)
    })())?;

    Ok(PipelineReport {
        output_dir: out,
        manifest,
        comparison,
        partition,
        dataset,
    })
}
