use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use anchorroute::anchors::{cohesion_report, louvain, LouvainOptions};
use anchorroute::choiceset::{ChoiceSetOptions, PathWeight};
use anchorroute::cnpsl::{FitOptions, OptimOptions, ScaleMode};
use anchorroute::complexity::{compute_factor_table, dummy_code, ComplexityParams, SkyViewParams};
use anchorroute::features::{build_full_dataset, FeatureContext, ModelVariant, TurnPenalties};
use anchorroute::netgraph::io::{load_buildings, load_network, load_pois, load_trips};
use anchorroute::netgraph::{filter_trips, CategorySet, HexGrid, Point, RoadNetwork, TripBounds};
use anchorroute::pipeline::artifacts::*;
use anchorroute::pipeline::{
    choice_sets_from_trips, complexity_vif, fit_variants, generate_synthetic, run_pipeline, stratified_fits, with_threads,
    PipelineConfig, StrataBounds, StratifyBy, SynthConfig,
};
use anchorroute::traffic::{estimate_speeds, fill_missing_speeds};
use anchorroute::{Error, Result};

/// Anchor-based cross-nested path-size logit route choice toolkit.
#[derive(Parser)]
#[command(name = "anchorroute", version)]
struct Cli {
    /// worker threads (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic city, trips and ground truth
    Synth(SynthArgs),
    /// Estimate edge speeds from trip samples
    Speeds(SpeedsArgs),
    /// Node and cell complexity metrics with dummy coding
    Metrics(MetricsArgs),
    /// Partition the network into anchors
    Anchors(AnchorsArgs),
    /// Build choice sets from observed trips
    Choiceset(ChoicesetArgs),
    /// Route features for every choice set
    Features(FeaturesArgs),
    /// Estimate one or more model variants
    Fit(FitArgs),
    /// Fit a variant separately within strata
    StratifyFit(StratifyArgs),
    /// Variance inflation factors of the complexity columns
    Vif(VifArgs),
    /// Run every stage from a TOML config
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    rows: usize,
    #[arg(long, default_value_t = 10)]
    cols: usize,
    /// meters between lattice nodes
    #[arg(long, default_value_t = 300.0)]
    spacing: f64,
    #[arg(long)]
    no_ring: bool,
    #[arg(long, default_value_t = 1000)]
    n_obs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct SpeedsArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    trips: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NetArgs {
    #[arg(long)]
    network: PathBuf,
    /// speeds.tsv; required when the network file carries no speeds
    #[arg(long)]
    speeds: Option<PathBuf>,
    /// lower bound on edge speed, m/s
    #[arg(long, default_value_t = 0.5)]
    speed_floor: f64,
}

impl NetArgs {
    fn load(&self) -> Result<RoadNetwork> {
        let net = load_network(&self.network)?;
        match &self.speeds {
            Some(p) => net.with_speeds(&read_speeds(p)?, self.speed_floor),
            None => Ok(net),
        }
    }
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    buildings: Option<PathBuf>,
    #[arg(long)]
    pois: Option<PathBuf>,
    /// hexagon circumradius, m
    #[arg(long, default_value_t = 500.0)]
    hex_radius: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AnchorsArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ChoicesetArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    trips: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    k_cap: usize,
    #[arg(long, default_value_t = 0.4)]
    threshold: f64,
    #[arg(long, default_value_t = 5)]
    min_size: usize,
    #[arg(long, value_enum, default_value_t = WeightArg::Duration)]
    weight: WeightArg,
    /// shortest kept trip, s
    #[arg(long, default_value_t = 300.0)]
    min_duration: f64,
    /// longest kept trip, s
    #[arg(long, default_value_t = 18_000.0)]
    max_duration: f64,
    /// shortest kept trip, m
    #[arg(long, default_value_t = 1_000.0)]
    min_length: f64,
    /// longest kept trip, m
    #[arg(long, default_value_t = 50_000.0)]
    max_length: f64,
    /// keep every trip regardless of duration and length bounds
    #[arg(long)]
    no_filter: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    choicesets: PathBuf,
    /// directory with metrics_nodes.tsv, metrics_cells.tsv, metrics_meta.json
    #[arg(long)]
    metrics_dir: PathBuf,
    /// directory with anchors_nodes.tsv, anchors_edges.tsv, anchors.json
    #[arg(long)]
    anchors_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitCommon {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum, default_value_t = ScaleArg::Shared)]
    scale: ScaleArg,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// weight each observation by its multiplicity
    #[arg(long)]
    weighted: bool,
}

impl FitCommon {
    fn options(&self) -> FitOptions {
        FitOptions {
            optim: OptimOptions {
                max_iter: self.max_iter,
                ..OptimOptions::default()
            },
            scale: self.scale.into(),
            weight_by_multiplicity: self.weighted,
            ..FitOptions::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: FitCommon,
    /// model1..model4 or all
    #[arg(long, default_value = "all")]
    variant: String,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StratifyArgs {
    #[command(flatten)]
    common: FitCommon,
    /// time_of_day, distance or occupancy
    #[arg(long)]
    by: StratifyBy,
    #[arg(long, default_value = "model4")]
    variant: ModelVariant,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VifArgs {
    #[arg(long)]
    features: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Fixed,
    Shared,
    PerNest,
}

impl From<ScaleArg> for ScaleMode {
    fn from(s: ScaleArg) -> ScaleMode {
        match s {
            ScaleArg::Fixed => ScaleMode::Fixed,
            ScaleArg::Shared => ScaleMode::Shared,
            ScaleArg::PerNest => ScaleMode::PerNest,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Duration,
    Length,
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::default();
    cfg.city.rows = a.rows;
    cfg.city.cols = a.cols;
    cfg.city.spacing = a.spacing;
    cfg.city.ring = !a.no_ring;
    cfg.simulation.n_obs = a.n_obs;
    cfg.simulation.seed = a.seed;
    let paths = generate_synthetic(&cfg, &a.out)?;
    println!("wrote {}", paths.network.parent().unwrap_or(Path::new(".")).display());
    Ok(())
}

fn speeds(a: &SpeedsArgs) -> Result<()> {
    let net = load_network(&a.network)?;
    let trips = load_trips(&a.trips, &net)?;
    let measured = estimate_speeds(&net, &trips)?;
    let filled = fill_missing_speeds(&net, &measured)?;
    write_file(&a.out, |w| write_speeds(&filled.speeds, w))?;
    println!(
        "{} edges with samples, {} filled by the global mean",
        measured.len(),
        filled.global_fallback.len()
    );
    Ok(())
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    let net = a.net.load()?;
    let categories = CategorySet::default();
    let buildings = match &a.buildings {
        Some(p) => load_buildings(p)?,
        None => Vec::new(),
    };
    let pois = match &a.pois {
        Some(p) => load_pois(p, &categories)?,
        None => Vec::new(),
    };
    let grid = HexGrid::new(Point::new(0.0, 0.0), a.hex_radius)?;
    let sky = SkyViewParams::default();
    let table = compute_factor_table(&net, &grid, &buildings, &pois, categories.len(), &ComplexityParams { sky })?;
    let dummies = dummy_code(&table);
    write_file(&a.out_dir.join("metrics_nodes.tsv"), |w| write_node_metrics(&table, &dummies, w))?;
    write_file(&a.out_dir.join("metrics_cells.tsv"), |w| write_cell_metrics(&table, &dummies, w))?;
    write_json(&a.out_dir.join("metrics_meta.json"), &MetricsMeta::new(&grid, sky, &dummies))
}

fn anchors(a: &AnchorsArgs) -> Result<()> {
    let net = a.net.load()?;
    let partition = louvain(
        &net,
        &LouvainOptions {
            resolution: a.resolution,
            seed: a.seed,
        },
    )?;
    let cohesion = cohesion_report(&partition, &net)?;
    write_file(&a.out_dir.join("anchors_nodes.tsv"), |w| {
        write_anchor_table("node_id", &partition.node_to_anchor, w)
    })?;
    write_file(&a.out_dir.join("anchors_edges.tsv"), |w| {
        write_anchor_table("edge_id", &partition.edge_to_anchor, w)
    })?;
    write_json(
        &a.out_dir.join("anchors.json"),
        &AnchorSummary {
            anchor_count: partition.anchor_count,
            modularity: partition.modularity,
            history: partition.history.clone(),
            cohesion,
        },
    )?;
    println!("{} anchors, modularity {:.4}", partition.anchor_count, partition.modularity);
    Ok(())
}

fn choiceset(a: &ChoicesetArgs) -> Result<()> {
    let net = a.net.load()?;
    let trips = load_trips(&a.trips, &net)?;
    let trips = if a.no_filter {
        trips
    } else {
        let bounds = TripBounds {
            min_duration: a.min_duration,
            max_duration: a.max_duration,
            min_length: a.min_length,
            max_length: a.max_length,
        };
        filter_trips(&trips, &net, &bounds)?
    };
    let opts = ChoiceSetOptions {
        min_size: a.min_size,
        threshold: a.threshold,
        k_cap: a.k_cap,
        weight: match a.weight {
            WeightArg::Duration => PathWeight::Duration,
            WeightArg::Length => PathWeight::Length,
        },
    };
    let (sets, skipped) = choice_sets_from_trips(&net, &trips, &opts)?;
    if sets.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no choice set reached the minimum size ({} trips kept)",
            trips.len()
        )));
    }
    write_file(&a.out, |w| write_choice_sets(&sets, w))?;
    println!("{} choice sets, {} undersized OD pairs skipped", sets.len(), skipped);
    Ok(())
}

fn features(a: &FeaturesArgs) -> Result<()> {
    let net = a.net.load()?;
    let sets = parse_choice_sets(&read_text(&a.choicesets)?)?;
    let meta: MetricsMeta = read_json(&a.metrics_dir.join("metrics_meta.json"))?;
    let grid = meta.grid()?;
    let dummies = parse_dummies(
        &read_text(&a.metrics_dir.join("metrics_nodes.tsv"))?,
        &read_text(&a.metrics_dir.join("metrics_cells.tsv"))?,
    )?;
    let summary: AnchorSummary = read_json(&a.anchors_dir.join("anchors.json"))?;
    let partition = parse_partition(
        &read_text(&a.anchors_dir.join("anchors_nodes.tsv"))?,
        &read_text(&a.anchors_dir.join("anchors_edges.tsv"))?,
        &summary,
    )?;
    let ctx = FeatureContext {
        net: &net,
        grid: &grid,
        dummies: &dummies,
        partition: &partition,
        turns: TurnPenalties::default(),
    };
    let data = build_full_dataset(&ctx, &sets)?;
    write_file(&a.out, |w| write_features(&data, w))?;
    println!("{} observations, {} nests", data.observations.len(), data.n_nests);
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let data = read_features(&a.common.features)?;
    let variants = if a.variant.eq_ignore_ascii_case("all") {
        ModelVariant::ALL.to_vec()
    } else {
        a.variant
            .split(',')
            .map(|v| v.trim().parse())
            .collect::<Result<Vec<ModelVariant>>>()?
    };
    let comparison = fit_variants(&data, &variants, &a.common.options())?;
    let table = comparison.table();
    write_json(&a.out_dir.join("fit.json"), &comparison)?;
    write_file(&a.out_dir.join("fit_table.txt"), |w| w.write_all(table.as_bytes()))?;
    print!("{table}");
    for f in comparison.fits.iter().filter(|f| !f.converged) {
        log::warn!(
            "{} did not converge in {} iterations",
            f.variant.map(|v| v.to_string()).unwrap_or_default(),
            f.iterations
        );
    }
    Ok(())
}

fn stratify_fit(a: &StratifyArgs) -> Result<()> {
    let data = read_features(&a.common.features)?;
    let strata = stratified_fits(&data, a.variant, a.by, &StrataBounds::default(), &a.common.options())?;
    write_json(&a.out, &strata)?;
    for s in &strata {
        match (&s.fit, &s.error) {
            (Some(f), _) => println!(
                "{:<12} n={:<6} LL={:.3} rho_bar_sq={:.4}",
                s.label, s.observations, f.log_likelihood, f.rho_bar_sq
            ),
            (None, e) => println!("{:<12} n={:<6} {}", s.label, s.observations, e.as_deref().unwrap_or("")),
        }
    }
    Ok(())
}

fn vif_cmd(a: &VifArgs) -> Result<()> {
    let report = complexity_vif(&read_features(&a.features)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&a.config)?;
    let report = run_pipeline(&cfg)?;
    print!("{}", report.comparison.table());
    for (k, v) in &report.manifest.counts {
        println!("{k}: {v}");
    }
    println!("artifacts in {}", report.output_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Synth(a) => synth(a),
        Cmd::Speeds(a) => speeds(a),
        Cmd::Metrics(a) => metrics(a),
        Cmd::Anchors(a) => anchors(a),
        Cmd::Choiceset(a) => choiceset(a),
        Cmd::Features(a) => features(a),
        Cmd::Fit(a) => fit(a),
        Cmd::StratifyFit(a) => stratify_fit(a),
        Cmd::Vif(a) => vif_cmd(a),
        Cmd::Pipeline(a) => pipeline(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = cli.threads;
    let outcome = if threads > 0 {
        with_threads(threads, || run(cli)).and_then(|r| r)
    } else {
        run(cli)
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

