//! Experiment config documents.
//!
//! One JSON file carries the global fields plus one section per subcommand.
//! Unknown fields are rejected everywhere and parse errors report a JSON
//! pointer to the offending field.

use std::path::{Path, PathBuf};

use deepgp_core::inference::Design;
use deepgp_core::prior::ConditioningConfig;
use deepgp_core::{CompositionStructure, GpFamily, PosteriorConfig, RateProfile, StructurePriorSpec};
use serde::Deserialize;
use serde_path_to_error::Segment;

use crate::error::{CliError, CliResult};
use crate::output::hex_sha256;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub rates: Option<RatesConfig>,
    #[serde(default)]
    pub sample: Option<SampleConfig>,
    #[serde(default)]
    pub prior: Option<PriorConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub structure: CompositionStructure,
    pub profile: RateProfile,
    pub n: Vec<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub family: GpFamily,
    pub beta: f64,
    pub r: usize,
    pub n: u64,
    pub count: usize,
    #[serde(default)]
    pub grid: usize,
    #[serde(default = "yes")]
    pub conditioned: bool,
    #[serde(default)]
    pub conditioning: ConditioningConfig,
    /// Rate constants used for the slack; defaults to the family's defaults.
    #[serde(default)]
    pub profile: Option<RateProfile>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub prior: StructurePriorSpec,
    #[serde(default)]
    pub draws: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub prior: StructurePriorSpec,
    pub posterior: PosteriorConfig,
    pub data: DataConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Header `x1,…,xd,y`; inputs in `[-1,1]`.
    Csv { path: PathBuf },
    Synthetic {
        truth: TruthConfig,
        n: usize,
        #[serde(default)]
        design: Design,
        #[serde(default = "unit")]
        noise_sd: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthConfig {
    /// `amplitude · sin(frequency · x_coordinate + phase)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        input_dim: usize,
        #[serde(default = "first")]
        coordinate: usize,
        #[serde(default)]
        phase: f64,
        /// Structure recorded as `η*` for diagnostics.
        #[serde(default)]
        structure: Option<CompositionStructure>,
    },
    /// A draw from the fit prior, or from the given structure under it.
    PriorDraw {
        #[serde(default)]
        structure: Option<CompositionStructure>,
    },
}

fn first() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Output directories of earlier `fit` runs.
    pub fit_dirs: Vec<PathBuf>,
    #[serde(default = "default_c")]
    pub c: Vec<f64>,
    /// Apply the `|d|₁ ≤ log(2 log n)` node cap.
    #[serde(default)]
    pub cap: bool,
    /// Overrides the truth structure stored by `fit`.
    #[serde(default)]
    pub truth_structure: Option<CompositionStructure>,
}

fn default_c() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub suite: Option<String>,
}

pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut s = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => s.push_str(&format!("/{index}")),
            Segment::Map { key } => s.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => s.push_str(&format!("/{variant}")),
            Segment::Unknown => s.push_str("/?"),
        }
    }
    if s.is_empty() {
        s.push('/');
    }
    s
}

pub fn parse(bytes: &[u8]) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let ptr = pointer(e.path());
        CliError::invalid(format!("config: {}", e.inner()), Some(&ptr))
    })?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::invalid(
            format!("config: unsupported schema_version {} (expected {SCHEMA_VERSION})", config.schema_version),
            Some("/schema_version"),
        ));
    }
    if config.threads == Some(0) {
        return Err(CliError::invalid("config: threads must be >= 1", Some("/threads")));
    }
    Ok(config)
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let bytes = std::fs::read(path).map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display()), None))?;
    Ok(LoadedConfig { config: parse(&bytes)?, sha256: hex_sha256(&bytes) })
}
