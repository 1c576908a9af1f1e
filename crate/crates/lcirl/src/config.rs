//! The optional TOML config file. Each command reads its own section; a flag
//! given on the command line wins over the file, and the file wins over the
//! built-in default.

use std::path::{Path, PathBuf};

use lcirl_core::features::{FeatureConfig, Variant};
use lcirl_core::irl::FitSettings;
use lcirl_core::trajopt::OptimizerSettings;
use serde::Deserialize;

use crate::error::{AppError, AppResult};
use crate::tables::{ColumnMap, Schema, Units};

/// Names the config file when `--config` is not given.
pub const CONFIG_ENV: &str = "LCIRL_CONFIG";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub jobs: Option<usize>,
    pub ingest: IngestSection,
    pub train: TrainSection,
    pub generate: GenerateSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
    pub plot: PlotSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub input: Option<Vec<PathBuf>>,
    pub schema: Option<Schema>,
    pub units: Option<Units>,
    pub out_dir: Option<PathBuf>,
    pub vicinity: Option<f64>,
    pub source: Option<String>,
    pub columns: Option<ColumnMap>,
    pub smoothing_window: Option<f64>,
    pub smoothing_tau: Option<f64>,
    pub replay_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Validation,
    Test,
    /// Every scenario, no split.
    All,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub data_dir: Option<PathBuf>,
    pub split_spec: Option<PathBuf>,
    pub split: Option<SplitChoice>,
    pub variant: Option<Variant>,
    pub sweep_grid: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
    pub features: Option<FeatureConfig>,
    pub fit: Option<FitSettings>,
    pub optimizer: Option<OptimizerSettings>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub model: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub trace_dir: Option<PathBuf>,
    pub optimizer: Option<OptimizerSettings>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub expert_dir: Option<PathBuf>,
    pub gen_dir_a: Option<PathBuf>,
    pub gen_dir_b: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dataset: Option<String>,
    pub label_a: Option<String>,
    pub label_b: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub spec: Option<PathBuf>,
    pub theta_star: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub fixture_format: Option<Schema>,
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSection {
    pub scenario: Option<PathBuf>,
    pub gen: Option<Vec<PathBuf>>,
    pub time: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Config {
    pub fn from_toml(text: &str, source: &Path) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::Input(format!("{}: {e}", source.display())))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// The file named by `flag`, else by [`CONFIG_ENV`], else defaults.
    pub fn discover(flag: Option<&Path>) -> AppResult<Self> {
        match flag {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }
}

/// A value that must come from the flag or the config file.
pub fn required<T>(flag: Option<T>, config: Option<T>, what: &str) -> AppResult<T> {
    flag.or(config)
        .ok_or_else(|| AppError::Input(format!("missing {what} (give the flag or set it in the config file)")))
}
