//! Reliability and trade-off metrics.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("golden and faulty logit sets differ: {0}")]
    ShapeMismatch(String),
}

/// Accuracy drop in percentage points, signed (faults occasionally help).
pub fn vulnerability(golden: f64, faulty: f64) -> f64 {
    100.0 * (golden - faulty)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SdcRates {
    /// Percent of inputs whose top-1 class changed.
    pub sdc1: f64,
    /// Percent of inputs that kept their top-1 class but lost more than 10%
    /// (relative) of its softmax confidence.
    pub sdc10: f64,
}

/// Relative confidence drop above which an unchanged top-1 still counts as
/// corrupted.
pub const SDC10_RELATIVE_DROP: f64 = 0.10;

pub fn sdc_rates<G, F>(golden: &[G], faulty: &[F]) -> Result<SdcRates, MetricsError>
where
    G: AsRef<[f64]>,
    F: AsRef<[f64]>,
{
    if golden.len() != faulty.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} golden vs {} faulty inputs",
            golden.len(),
            faulty.len()
        )));
    }
    if golden.is_empty() {
        return Ok(SdcRates::default());
    }
    let (mut top1, mut conf) = (0usize, 0usize);
    for (i, (g, f)) in golden.iter().zip(faulty).enumerate() {
        let (g, f) = (g.as_ref(), f.as_ref());
        if g.len() != f.len() || g.is_empty() {
            return Err(MetricsError::ShapeMismatch(format!(
                "input {i}: {} vs {} logits",
                g.len(),
                f.len()
            )));
        }
        let gc = argmax(g);
        let fc = argmax(f);
        if gc != fc {
            top1 += 1;
        } else {
            let pg = softmax(g)[gc];
            let pf = softmax(f)[fc];
            if pg > 0.0 && (pg - pf) / pg > SDC10_RELATIVE_DROP {
                conf += 1;
            }
        }
    }
    let n = golden.len() as f64;
    Ok(SdcRates { sdc1: 100.0 * top1 as f64 / n, sdc10: 100.0 * conf as f64 / n })
}

/// Percent of faults correctly handled, `100 - SDC`.
pub fn fault_coverage(sdc: f64) -> f64 {
    100.0 - sdc
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PDropInputs {
    /// Parameter count N.
    pub params: f64,
    /// Stored bit width W.
    pub width: f64,
    /// Device lifetime T.
    pub lifetime: f64,
    /// Test interval t, same unit as `lifetime`.
    pub test_interval: f64,
    /// Probability of one bit flip during `test_interval`.
    pub p_single: f64,
    pub ber: f64,
    pub acc_drop: f64,
}

/// Probability of experiencing `acc_drop` over the device lifetime:
/// `N^2 * W^2 * T / t * P_single * BER * acc_drop`, evaluated left to right.
///
/// The squared N and W are kept as published even though the expression is
/// not a probability in general.
pub fn p_drop(inp: &PDropInputs) -> f64 {
    inp.params * inp.params * inp.width * inp.width * inp.lifetime / inp.test_interval
        * inp.p_single
        * inp.ber
        * inp.acc_drop
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RapInputs {
    pub acc_drop: f64,
    /// Memory footprint relative to the 8-bit unprotected baseline.
    pub mem_ovh: f64,
    /// Execution cost relative to the 8-bit unprotected baseline.
    pub perf_ovh: f64,
}

/// Reliability-aware performance; lower is better.
pub fn rap(inp: &RapInputs) -> f64 {
    inp.acc_drop * inp.mem_ovh * inp.perf_ovh
}
