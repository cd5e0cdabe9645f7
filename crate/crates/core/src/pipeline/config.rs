use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anchors::LouvainOptions;
use crate::choiceset::ChoiceSetOptions;
use crate::cnpsl::ScaleMode;
use crate::complexity::SkyViewParams;
use crate::error::{Error, Result};
use crate::features::{ModelVariant, TurnPenalties};
use crate::netgraph::TripBounds;
use crate::synth::{CityConfig, SimulationConfig};

use super::stratify::{StrataBounds, StratifyBy};

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub network: PathBuf,
    pub trips: PathBuf,
    #[serde(default)]
    pub buildings: Option<PathBuf>,
    #[serde(default)]
    pub pois: Option<PathBuf>,
    /// declared POI categories; defaults to the six standard ones
    #[serde(default)]
    pub categories: Option<Vec<String>>,
    /// raw label → declared category
    #[serde(default)]
    pub category_mapping: BTreeMap<String, String>,
}

/// Generate a synthetic city instead of reading inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub city: CityConfig,
    pub simulation: SimulationConfig,
    /// hexagon circumradius used while simulating
    pub hex_radius: f64,
    /// share of traversed edges that report a speed sample
    pub sample_share: f64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            city: CityConfig::default(),
            simulation: SimulationConfig::default(),
            hex_radius: 300.0,
            sample_share: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedConfig {
    /// lower bound applied to estimated speeds, m/s
    pub floor: f64,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        SpeedConfig { floor: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub hex_radius: f64,
    pub hex_origin: [f64; 2],
    pub sky: SkyViewParams,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            hex_radius: 500.0,
            hex_origin: [0.0, 0.0],
            sky: SkyViewParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub variants: Vec<ModelVariant>,
    pub scale: ScaleMode,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub weight_by_multiplicity: bool,
    /// additionally fit `stratify_variant` within each stratum
    pub stratify: Option<StratifyBy>,
    pub stratify_variant: ModelVariant,
    pub strata: StrataBounds,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            variants: ModelVariant::ALL.to_vec(),
            scale: ScaleMode::Shared,
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            weight_by_multiplicity: false,
            stratify: None,
            stratify_variant: ModelVariant::M4,
            strata: StrataBounds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// worker threads; 0 uses all cores
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<InputConfig>,
    pub synth: Option<SynthConfig>,
    pub output: OutputConfig,
    pub trips: TripBounds,
    pub speeds: SpeedConfig,
    pub metrics: MetricsConfig,
    pub anchors: LouvainOptions,
    pub choiceset: ChoiceSetOptions,
    pub features: TurnPenalties,
    pub fit: FitConfig,
    pub run: RunConfig,
    /// directory that relative input paths resolve against
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.input, &self.synth) {
            (None, None) => return Err(Error::Config("either [input] or [synth] is required".into())),
            (Some(_), Some(_)) => return Err(Error::Config("[input] and [synth] are mutually exclusive".into())),
            _ => {}
        }
        if self.fit.variants.is_empty() {
            return Err(Error::Config("fit.variants is empty".into()));
        }
        if !(self.metrics.hex_radius > 0.0) {
            return Err(Error::Config("metrics.hex_radius must be positive".into()));
        }
        if self.choiceset.min_size < 2 {
            return Err(Error::Config("choiceset.min_size must be at least 2".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn fit_options(&self) -> crate::cnpsl::FitOptions {
        crate::cnpsl::FitOptions {
            optim: crate::cnpsl::OptimOptions {
                max_iter: self.fit.max_iter,
                grad_tol: self.fit.grad_tol,
                rel_tol: self.fit.rel_tol,
            },
            scale: self.fit.scale,
            weight_by_multiplicity: self.fit.weight_by_multiplicity,
            ..Default::default()
        }
    }
}
