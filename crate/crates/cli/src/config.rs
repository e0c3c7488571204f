//! JSON run configurations, one document shape per subcommand.
//!
//! Every document carries `"schema": 1` and rejects unknown keys.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use multispeed_core::dynamics::EvolveConfig;
use multispeed_core::experiments::{MonitorFlags, TailWindow};
use multispeed_core::solitons::SolitonParams;
use multispeed_core::Grid;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub dim: usize,
    pub n: Vec<usize>,
    pub length: Vec<f64>,
}

impl GridBlock {
    pub fn build(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.dim, &self.n, &self.length)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Bin,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Bin]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { directory: None, formats: all_formats() }
    }
}

impl OutputBlock {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Ground-state solver settings. The profile lives on `grid` when given and
/// on the simulation grid otherwise.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileBlock {
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default = "default_profile_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_gamma_exponent")]
    pub gamma_exponent: f64,
}

fn default_profile_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    2000
}

fn default_gamma_exponent() -> f64 {
    1.5
}

impl Default for ProfileBlock {
    fn default() -> Self {
        ProfileBlock { grid: None, tol: 1e-10, max_iter: 2000, gamma_exponent: 1.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateConfig {
    pub schema: u32,
    pub grid: GridBlock,
    #[serde(default)]
    pub profile: ProfileBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonConfig {
    pub schema: u32,
    pub grid: GridBlock,
    pub family: [SolitonParams; 2],
    #[serde(default)]
    pub profile: ProfileBlock,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    /// The soliton pair of `family` at `t_start`.
    Solitons {},
    Zero {},
    /// A pair stored in the binary field container.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveCommandConfig {
    pub schema: u32,
    pub grid: GridBlock,
    pub initial: Initial,
    #[serde(default)]
    pub family: Option<[SolitonParams; 2]>,
    #[serde(default)]
    pub profile: ProfileBlock,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default = "default_t0")]
    pub t0: f64,
    pub schedule: Vec<f64>,
    #[serde(default)]
    pub monitors: MonitorFlags,
    #[serde(default)]
    pub tail: Option<TailWindow>,
    #[serde(default = "yes")]
    pub control: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_t0() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructConfig {
    pub schema: u32,
    pub grid: GridBlock,
    pub family: [SolitonParams; 2],
    #[serde(default)]
    pub profile: ProfileBlock,
    pub evolve: EvolveConfig,
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoercivityBlock {
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Soliton around which the linearized action is sampled; a standing wave
    /// with `ω = μ = 1` when absent.
    #[serde(default)]
    pub soliton: Option<SolitonParams>,
    #[serde(default)]
    pub t: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub schema: u32,
    pub grid: GridBlock,
    #[serde(default)]
    pub profile: ProfileBlock,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_eig_tol")]
    pub tol: f64,
    /// Defaults to `1e-6 · max(1, max|V|)`.
    #[serde(default)]
    pub zero_tol: Option<f64>,
    #[serde(default)]
    pub coercivity: Option<CoercivityBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_k() -> usize {
    3
}

fn default_eig_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub schema: u32,
    pub grid: GridBlock,
    /// Base family; velocities are replaced by `±v/2` along the first axis.
    pub family: [SolitonParams; 2],
    #[serde(default)]
    pub profile: ProfileBlock,
    pub evolve: EvolveConfig,
    pub experiment: ExperimentBlock,
    pub speeds: Vec<f64>,
    #[serde(default)]
    pub output: OutputBlock,
}

pub trait Versioned {
    fn schema(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {
        $(impl Versioned for $t {
            fn schema(&self) -> u32 {
                self.schema
            }
        })*
    };
}

versioned!(GroundStateConfig, SolitonConfig, EvolveCommandConfig, ConstructConfig, SpectrumConfig, ScanConfig);

/// Parses a document, reporting line and column on malformed input.
pub fn parse<T: DeserializeOwned + Versioned>(text: &str) -> Result<T, CliError> {
    let cfg: T = serde_json::from_str(text).map_err(|e| {
        CliError::Config(format!("line {}, column {}: {}", e.line(), e.column(), e))
    })?;
    if cfg.schema() != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema {} (expected {SCHEMA_VERSION})",
            cfg.schema()
        )));
    }
    Ok(cfg)
}
