//! Fault campaigns over a quantized network.
//!
//! Each trial builds a plan from `(seed, stream)` and evaluates the whole
//! dataset under it. Weight plans use stream [`WEIGHT_STREAM`]; because a bit
//! flips when its draw falls below the BER, the same seed at a higher BER
//! flips a superset of the bits flipped at a lower one.

use std::ops::Range;

use rand::Rng;

use crate::faults::{
    plan_ber_weight_faults_with, BerMode, FaultError, FaultPlan, FaultSite, RngSpec,
};
use crate::metrics::{fault_coverage, sdc_rates, vulnerability, SdcRates};
use crate::net::{evaluate, Dataset, EvalResult, NetError, NetworkModel};

pub const WEIGHT_STREAM: u64 = 0;
pub const ACTIVATION_STREAM: u64 = 1;
pub const ADDER_STREAM: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error("campaign configuration: {0}")]
    Config(String),
}

/// Outcome of one faulty evaluation against the golden run.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRecord {
    pub ber: f64,
    pub seed: u64,
    pub faults: usize,
    pub golden_accuracy: f64,
    pub faulty_accuracy: f64,
    /// Percentage points, signed.
    pub vulnerability: f64,
    pub sdc: SdcRates,
    /// `100 - (sdc1 + sdc10)`: inputs with neither kind of corruption.
    pub fault_coverage: f64,
    pub detections: u64,
}

impl CampaignRecord {
    /// Compare a faulty evaluation with the golden one over the same dataset.
    pub fn from_eval(golden: &EvalResult, faulty: &EvalResult, ber: f64, seed: u64, faults: usize) -> Self {
        let sdc = sdc_rates(&golden.logits, &faulty.logits).expect("same model, same dataset");
        Self {
            ber,
            seed,
            faults,
            golden_accuracy: golden.accuracy,
            faulty_accuracy: faulty.accuracy,
            vulnerability: vulnerability(golden.accuracy, faulty.accuracy),
            sdc,
            fault_coverage: fault_coverage(sdc.sdc1 + sdc.sdc10),
            detections: faulty.detections,
        }
    }
}

pub fn golden_run(model: &NetworkModel, dataset: &Dataset) -> Result<EvalResult, CampaignError> {
    Ok(evaluate(model, dataset, &FaultPlan::empty())?)
}

pub fn weight_ber_plan(model: &NetworkModel, ber: f64, seed: u64, mode: BerMode) -> Result<FaultPlan, CampaignError> {
    Ok(plan_ber_weight_faults_with(
        &model.weight_shape(),
        ber,
        RngSpec::new(seed, WEIGHT_STREAM),
        mode,
    )?)
}

/// One weight-memory BER trial.
pub fn weight_ber_trial(
    model: &NetworkModel,
    dataset: &Dataset,
    golden: &EvalResult,
    ber: f64,
    seed: u64,
    mode: BerMode,
) -> Result<CampaignRecord, CampaignError> {
    let plan = weight_ber_plan(model, ber, seed, mode)?;
    let faulty = evaluate(model, dataset, &plan)?;
    Ok(CampaignRecord::from_eval(golden, &faulty, ber, seed, plan.len()))
}

/// Every (ber, seed) cell, ordered by BER then seed.
pub fn weight_ber_campaign(
    model: &NetworkModel,
    dataset: &Dataset,
    bers: &[f64],
    seeds: &[u64],
    mode: BerMode,
) -> Result<Vec<CampaignRecord>, CampaignError> {
    let golden = golden_run(model, dataset)?;
    let mut out = Vec::with_capacity(bers.len() * seeds.len());
    for &ber in bers {
        for &seed in seeds {
            out.push(weight_ber_trial(model, dataset, &golden, ber, seed, mode)?);
        }
    }
    Ok(out)
}

/// Transient activation faults: for every sample, `per_sample` single-bit
/// flips at uniformly drawn (layer, input element, bit in `bits`), all in
/// that sample's invocation.
pub fn activation_plan(
    model: &NetworkModel,
    samples: usize,
    bits: Range<u32>,
    per_sample: usize,
    seed: u64,
) -> Result<FaultPlan, CampaignError> {
    let min_width = model.layers.iter().map(|l| l.activation_width()).min().unwrap_or(0);
    if bits.is_empty() || bits.end > min_width {
        return Err(CampaignError::Config(format!(
            "activation bit range {bits:?} must be nonempty and below {min_width}"
        )));
    }
    let mut rng = RngSpec::new(seed, ACTIVATION_STREAM).generator();
    let mut sites = Vec::with_capacity(samples * per_sample);
    for sample in 0..samples as u64 {
        for _ in 0..per_sample {
            let layer = rng.random_range(0..model.layers.len());
            let element = rng.random_range(0..model.layers[layer].spec.kind.in_len()) as u64;
            let bit = rng.random_range(bits.clone());
            sites.push(FaultSite::activation(layer as u32, element, bit, sample));
        }
    }
    Ok(FaultPlan::from_sites(sites, seed, None))
}

pub fn activation_trial(
    model: &NetworkModel,
    dataset: &Dataset,
    golden: &EvalResult,
    bits: Range<u32>,
    per_sample: usize,
    seed: u64,
) -> Result<CampaignRecord, CampaignError> {
    let plan = activation_plan(model, dataset.len(), bits, per_sample, seed)?;
    let faulty = evaluate(model, dataset, &plan)?;
    Ok(CampaignRecord::from_eval(golden, &faulty, f64::NAN, seed, plan.len()))
}

/// Transient multiplier-internal faults: one uniformly drawn (layer, MAC,
/// adder bit) per sample, restricted to layers with a modeled adder.
pub fn adder_plan(model: &NetworkModel, samples: usize, seed: u64) -> Result<FaultPlan, CampaignError> {
    let layers: Vec<usize> = (0..model.layers.len()).filter(|&l| model.has_adder_model(l)).collect();
    if layers.is_empty() {
        return Err(CampaignError::Config("no layer uses a logarithmic multiplier".into()));
    }
    let mut rng = RngSpec::new(seed, ADDER_STREAM).generator();
    let sites = (0..samples as u64).map(|sample| {
        let layer = layers[rng.random_range(0..layers.len())];
        let spec = &model.layers[layer].spec;
        let element = rng.random_range(0..spec.kind.macs()) as u64;
        let bit = rng.random_range(0..spec.backend.adder_width());
        FaultSite::adder(layer as u32, element, bit, sample)
    });
    Ok(FaultPlan::from_sites(sites.collect::<Vec<_>>(), seed, None))
}

pub fn adder_trial(
    model: &NetworkModel,
    dataset: &Dataset,
    golden: &EvalResult,
    seed: u64,
) -> Result<CampaignRecord, CampaignError> {
    let plan = adder_plan(model, dataset.len(), seed)?;
    let faulty = evaluate(model, dataset, &plan)?;
    Ok(CampaignRecord::from_eval(golden, &faulty, f64::NAN, seed, plan.len()))
}
