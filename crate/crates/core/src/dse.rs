//! Bit-width search: quantize, check an accuracy threshold and a
//! fault-resilience threshold, and bisect the width range.
//!
//! Starting from `floor((m + n) / 2)`, a passing width moves down by
//! `floor((n - w) / 2)` and a failing one moves up by the same amount. The
//! loop stops when the width exceeds `n` or when it would revisit a width
//! already probed. A downward move that lands below `m` is raised to `m`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::campaign::{golden_run, weight_ber_trial, CampaignError};
use crate::faults::BerMode;
use crate::net::{Dataset, FloatModel, NetError, NetworkModel, Protection};
use crate::quant;

#[derive(Debug, thiserror::Error)]
pub enum DseError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("failed to load model: {0}")]
    ModelLoad(#[from] NetError),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
}

/// Per-MAC costs for the execution-time proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostTable {
    pub mac: f64,
    /// Extra cost of a MAC whose weight goes through the majority voter.
    pub vote: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        Self { mac: 1.0, vote: 0.0 }
    }
}

impl CostTable {
    pub fn exec_proxy(&self, model: &NetworkModel) -> f64 {
        model.mac_count() as f64 * self.mac + model.voted_mac_count() as f64 * self.vote
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Minimum golden accuracy, as a fraction. A width passes only if its
    /// accuracy is strictly greater.
    pub accuracy_threshold: f64,
    /// Maximum mean accuracy drop in percentage points, at every BER.
    pub reliability_threshold: f64,
    pub min_bits: u32,
    pub max_bits: u32,
    pub ber_grid: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), DseError> {
        let bad = |m: String| Err(DseError::InvalidConfig(m));
        let (m, n) = (self.min_bits, self.max_bits);
        if !(quant::MIN_BITS <= m && m <= n && n <= quant::MAX_BITS) {
            return bad(format!("range [{m}, {n}] must satisfy 2 <= m <= n <= 8"));
        }
        if self.ber_grid.is_empty() {
            return bad("ber_grid is empty".into());
        }
        if let Some(b) = self.ber_grid.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return bad(format!("BER {b} outside [0, 1]"));
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.accuracy_threshold.is_nan() || self.reliability_threshold.is_nan() {
            return bad("thresholds must be numbers".into());
        }
        Ok(())
    }

    pub fn first_probe(&self) -> u32 {
        (self.min_bits + self.max_bits) / 2
    }
}

/// Metrics of one width before any fault campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub golden_accuracy: f64,
    pub memory_bits: u64,
    pub exec_proxy: f64,
}

/// What the search needs to know about a candidate width.
pub trait WidthEvaluator {
    fn baseline(&mut self, bits: u32) -> Result<Baseline, DseError>;
    /// Mean accuracy drop (percentage points) over `seeds` at `ber`.
    fn mean_drop(&mut self, bits: u32, ber: f64, seeds: &[u64]) -> Result<f64, DseError>;
}

/// Evaluates widths by quantizing a float model with MSB triplication and
/// running weight BER campaigns on a test set.
pub struct NetworkEvaluator<'a> {
    float: &'a FloatModel,
    calibration: &'a Dataset,
    test: &'a Dataset,
    costs: CostTable,
    mode: BerMode,
    cached: Option<(u32, NetworkModel)>,
}

impl<'a> NetworkEvaluator<'a> {
    pub fn new(float: &'a FloatModel, calibration: &'a Dataset, test: &'a Dataset, costs: CostTable) -> Self {
        Self { float, calibration, test, costs, mode: BerMode::Bernoulli, cached: None }
    }

    pub fn quantize(&self, bits: u32) -> Result<NetworkModel, DseError> {
        let float = self.float.with_weight_bits(bits).with_protection(Protection::MsbTriplication);
        Ok(NetworkModel::build(&float, self.calibration)?)
    }

    fn model(&mut self, bits: u32) -> Result<&NetworkModel, DseError> {
        if self.cached.as_ref().map(|(b, _)| *b) != Some(bits) {
            self.cached = Some((bits, self.quantize(bits)?));
        }
        Ok(&self.cached.as_ref().expect("just set").1)
    }
}

impl WidthEvaluator for NetworkEvaluator<'_> {
    fn baseline(&mut self, bits: u32) -> Result<Baseline, DseError> {
        let test = self.test;
        let costs = self.costs;
        let model = self.model(bits)?;
        Ok(Baseline {
            golden_accuracy: golden_run(model, test)?.accuracy,
            memory_bits: model.memory_bits(),
            exec_proxy: costs.exec_proxy(model),
        })
    }

    fn mean_drop(&mut self, bits: u32, ber: f64, seeds: &[u64]) -> Result<f64, DseError> {
        let (test, mode) = (self.test, self.mode);
        let model = self.model(bits)?;
        let golden = golden_run(model, test)?;
        let mut total = 0.0;
        for &seed in seeds {
            total += weight_ber_trial(model, test, &golden, ber, seed, mode)?.vulnerability;
        }
        Ok(total / seeds.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchStep {
    pub bit_width: u32,
    pub golden_accuracy: f64,
    /// Mean drop per BER, in grid order; empty when the accuracy gate failed.
    pub vulnerability: Vec<f64>,
    pub memory_bits: u64,
    pub exec_proxy: f64,
    pub passed: bool,
    pub next_bit_width: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The next width exceeded `n`.
    Overshoot,
    /// The next width had already been probed.
    Revisit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub config: SearchConfig,
    pub steps: Vec<SearchStep>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Selected { trace: SearchTrace, selected: SearchStep },
    NoPassingWidth { trace: SearchTrace },
}

impl SearchOutcome {
    pub fn trace(&self) -> &SearchTrace {
        match self {
            SearchOutcome::Selected { trace, .. } | SearchOutcome::NoPassingWidth { trace } => trace,
        }
    }

    pub fn selected(&self) -> Option<&SearchStep> {
        match self {
            SearchOutcome::Selected { selected, .. } => Some(selected),
            SearchOutcome::NoPassingWidth { .. } => None,
        }
    }
}

pub fn next_width(bits: u32, passed: bool, cfg: &SearchConfig) -> i64 {
    let (w, m, n) = (i64::from(bits), i64::from(cfg.min_bits), i64::from(cfg.max_bits));
    let step = (n - w).div_euclid(2);
    if passed {
        (w - step).max(m)
    } else {
        w + step
    }
}

pub fn fortune_search<E: WidthEvaluator>(evaluator: &mut E, cfg: &SearchConfig) -> Result<SearchOutcome, DseError> {
    cfg.validate()?;
    let mut steps = Vec::new();
    let mut visited = BTreeSet::new();
    let mut bits = i64::from(cfg.first_probe());
    let termination = loop {
        if bits > i64::from(cfg.max_bits) {
            break Termination::Overshoot;
        }
        if !visited.insert(bits) {
            break Termination::Revisit;
        }
        let w = bits as u32;
        let base = evaluator.baseline(w)?;
        let mut vulnerability = Vec::new();
        let mut passed = base.golden_accuracy > cfg.accuracy_threshold;
        if passed {
            for &ber in &cfg.ber_grid {
                let drop = evaluator.mean_drop(w, ber, &cfg.seeds)?;
                vulnerability.push(drop);
                passed &= drop < cfg.reliability_threshold;
            }
        }
        let next = next_width(w, passed, cfg);
        steps.push(SearchStep {
            bit_width: w,
            golden_accuracy: base.golden_accuracy,
            vulnerability,
            memory_bits: base.memory_bits,
            exec_proxy: base.exec_proxy,
            passed,
            next_bit_width: next,
        });
        bits = next;
    };
    let trace = SearchTrace { config: cfg.clone(), steps, termination };
    let best = trace.steps.iter().filter(|s| s.passed).min_by_key(|s| s.bit_width).cloned();
    Ok(match best {
        Some(selected) => SearchOutcome::Selected { trace, selected },
        None => SearchOutcome::NoPassingWidth { trace },
    })
}

impl SearchTrace {
    /// One row per step. Vulnerability columns follow the BER grid; cells
    /// are empty for widths that failed the accuracy gate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,bit_width,golden_accuracy");
        for ber in &self.config.ber_grid {
            let _ = write!(out, ",vulnerability@{ber:e}");
        }
        out.push_str(",memory_bits,exec_proxy,passed,next_bit_width\n");
        for (i, s) in self.steps.iter().enumerate() {
            let _ = write!(out, "{i},{},{}", s.bit_width, s.golden_accuracy);
            for j in 0..self.config.ber_grid.len() {
                match s.vulnerability.get(j) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            let _ = writeln!(out, ",{},{},{},{}", s.memory_bits, s.exec_proxy, s.passed, s.next_bit_width);
        }
        out
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    outcome: &'static str,
    termination: Termination,
    steps: usize,
    accuracy_threshold: f64,
    reliability_threshold: f64,
    min_bits: u32,
    max_bits: u32,
    ber_grid: &'a [f64],
    seeds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected: Option<&'a SearchStep>,
}

impl SearchOutcome {
    /// TOML description of the outcome and the selected width.
    pub fn summary(&self) -> String {
        let t = self.trace();
        let s = Summary {
            outcome: match self {
                SearchOutcome::Selected { .. } => "selected",
                SearchOutcome::NoPassingWidth { .. } => "no-passing-width",
            },
            termination: t.termination,
            steps: t.steps.len(),
            accuracy_threshold: t.config.accuracy_threshold,
            reliability_threshold: t.config.reliability_threshold,
            min_bits: t.config.min_bits,
            max_bits: t.config.max_bits,
            ber_grid: &t.config.ber_grid,
            seeds: t.config.seeds.len(),
            selected: self.selected(),
        };
        toml::to_string(&s).expect("summary is plain data")
    }
}
