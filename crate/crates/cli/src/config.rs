//! Experiment configs. Every command reads one TOML file; unknown keys are
//! rejected. Relative paths resolve against the config file's directory.
//! See `docs/config.md` for the full schema.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ftqnn::arith::MultConfig;
use ftqnn::net::Protection;

use crate::CliError;

/// Explicit seeds, as a list or a `{ first, count }` range.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { first: u64, count: u64 },
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { first, count } => (*first..first + count).collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterizeConfig {
    pub output: PathBuf,
    /// Sample count; omit for an exhaustive sweep (widths up to 8 only).
    pub samples: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    pub multipliers: Vec<MultConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizeConfig {
    pub model: PathBuf,
    pub output_dir: PathBuf,
    pub bits: Option<u32>,
    #[serde(default)]
    pub protection: Protection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    #[default]
    WeightBer,
    Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BerModeConfig {
    #[default]
    Bernoulli,
    FixedCount,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PDropConfig {
    #[serde(default = "one")]
    pub lifetime: f64,
    #[serde(default = "one")]
    pub test_interval: f64,
    #[serde(default = "one")]
    pub p_single: f64,
}

impl Default for PDropConfig {
    fn default() -> Self {
        Self { lifetime: 1.0, test_interval: 1.0, p_single: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default = "one")]
    pub mac: f64,
    #[serde(default)]
    pub vote: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { mac: 1.0, vote: 0.0 }
    }
}

impl From<CostConfig> for ftqnn::dse::CostTable {
    fn from(c: CostConfig) -> Self {
        Self { mac: c.mac, vote: c.vote }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub model: PathBuf,
    pub calibration: PathBuf,
    pub test: PathBuf,
    pub output: PathBuf,
    pub weight_bits: Option<u32>,
    /// Overrides every layer's multiplier.
    pub backend: Option<MultConfig>,
    pub protections: Vec<Protection>,
    #[serde(default)]
    pub fault: FaultKind,
    pub ber_grid: Option<Vec<f64>>,
    pub seeds: Option<Seeds>,
    #[serde(default)]
    pub ber_mode: BerModeConfig,
    /// A fault-plan file used instead of the BER grid.
    pub fault_plan: Option<PathBuf>,
    /// Half-open `[low, high)` bit range for activation flips.
    pub activation_bits: Option<[u32; 2]>,
    #[serde(default = "one_usize")]
    pub flips_per_sample: usize,
    #[serde(default)]
    pub p_drop: PDropConfig,
    #[serde(default)]
    pub costs: CostConfig,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DseConfig {
    pub model: PathBuf,
    pub calibration: PathBuf,
    pub test: PathBuf,
    pub trace: PathBuf,
    pub summary: PathBuf,
    pub accuracy_threshold: f64,
    pub reliability_threshold: f64,
    pub min_bits: u32,
    pub max_bits: u32,
    pub ber_grid: Vec<f64>,
    pub seeds: Seeds,
    #[serde(default)]
    pub costs: CostConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Campaign CSV files to aggregate.
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
}

/// A parsed config with its source bytes and base directory.
pub struct Loaded<T> {
    pub config: T,
    pub text: String,
    pub base: PathBuf,
}

impl<T> Loaded<T> {
    pub fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Loaded<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, text, base })
}
