use std::collections::HashMap;

use rayon::prelude::*;

use super::model::{observed_bounds, QuantLayer};
use super::{Activation, Bounds, ClampMethod, Dataset, NetError, NetworkModel, Protection};
use crate::arith::{AdderFlips, Family};
use crate::faults::{apply_word_faults, FaultPlan, FaultSite, SiteKind};
use crate::metrics::argmax;

/// Range-restriction unit: in-range values pass through; out-of-range
/// values are replaced per `method`.
pub fn clamp_unit(mac_out: f64, bounds: Bounds, method: ClampMethod) -> f64 {
    if bounds.contains(mac_out) {
        return mac_out;
    }
    match method {
        ClampMethod::M1 => bounds.lower,
        ClampMethod::M2 => bounds.upper,
        ClampMethod::M3 => {
            if mac_out > 0.0 {
                bounds.upper
            } else {
                bounds.lower
            }
        }
    }
}

/// Transient faults hitting one layer during one inference.
#[derive(Debug, Default, Clone)]
pub(super) struct Transient {
    /// (input element, bit)
    activation: Vec<(usize, u32)>,
    /// MAC element -> adder output flips
    adder: HashMap<usize, AdderFlips>,
}

/// A model with a fault plan applied: weight faults are baked into the
/// decoded levels, transient faults are indexed by (layer, invocation).
#[derive(Debug)]
pub struct FaultyModel<'a> {
    model: &'a NetworkModel,
    levels: Vec<Option<Vec<i32>>>,
    transients: HashMap<(u32, u64), Transient>,
}

/// Per-layer outputs of one inference.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub outputs: Vec<Vec<f64>>,
    /// Multiplications in which AdAM flagged a fault.
    pub detections: u64,
}

impl LayerTrace {
    pub fn logits(&self) -> &[f64] {
        self.outputs.last().map_or(&[], Vec::as_slice)
    }
}

impl<'a> FaultyModel<'a> {
    pub fn new(model: &'a NetworkModel, plan: &FaultPlan) -> Result<Self, NetError> {
        let mut transients: HashMap<(u32, u64), Transient> = HashMap::new();
        for site in plan.sites() {
            validate_site(model, site)?;
            if site.kind == SiteKind::WeightBit {
                continue;
            }
            let t = transients.entry((site.target, site.invocation)).or_default();
            match site.kind {
                SiteKind::ActivationBit => t.activation.push((site.element as usize, site.bit)),
                SiteKind::AdderInternalBit => {
                    let e = t.adder.entry(site.element as usize).or_default();
                    *e = e.with(site.bit);
                }
                SiteKind::WeightBit => unreachable!(),
            }
        }

        let mut levels = Vec::with_capacity(model.layers.len());
        for (i, layer) in model.layers.iter().enumerate() {
            let hit = plan
                .of_kind(SiteKind::WeightBit)
                .any(|s| s.target as usize == i);
            if hit {
                let words = apply_word_faults(
                    &layer.weights.words,
                    layer.weights.stored_width(),
                    i as u32,
                    plan,
                )
                .expect("weight sites validated");
                levels.push(Some(QuantLayer::decode_levels(&layer.weights, &words)));
            } else {
                levels.push(None);
            }
        }
        Ok(Self { model, levels, transients })
    }

    pub fn model(&self) -> &NetworkModel {
        self.model
    }

    pub fn infer(&self, input: &[f32], invocation: u64) -> Result<Vec<f64>, NetError> {
        Ok(self.trace(input, invocation, true)?.outputs.pop().unwrap_or_default())
    }

    /// Run one inference and keep every layer's output.
    pub fn trace(&self, input: &[f32], invocation: u64, clamp: bool) -> Result<LayerTrace, NetError> {
        if input.len() != self.model.input_len() {
            return Err(NetError::ShapeMismatch(format!(
                "input has {} values, model expects {}",
                input.len(),
                self.model.input_len()
            )));
        }
        let empty = Transient::default();
        let mut x: Vec<f64> = input.iter().map(|&v| f64::from(v)).collect();
        let mut outputs = Vec::with_capacity(self.model.layers.len());
        let mut detections = 0;
        for (i, layer) in self.model.layers.iter().enumerate() {
            let levels = self.levels[i].as_deref().unwrap_or(&layer.levels);
            let transient = self
                .transients
                .get(&(i as u32, invocation))
                .unwrap_or(&empty);
            let (y, d) = run_layer(layer, levels, &x, transient, clamp);
            detections += d;
            outputs.push(y.clone());
            x = y;
        }
        Ok(LayerTrace { outputs, detections })
    }
}

fn validate_site(model: &NetworkModel, site: &FaultSite) -> Result<(), NetError> {
    let invalid = |reason: String| Err(NetError::InvalidFaultSite { site: *site, reason });
    let Some(layer) = model.layers.get(site.target as usize) else {
        return invalid(format!("model has {} layers", model.layers.len()));
    };
    let (limit, width) = match site.kind {
        SiteKind::WeightBit => (layer.weights.words.len(), layer.weights.stored_width()),
        SiteKind::ActivationBit => (layer.spec.kind.in_len(), layer.activation_width()),
        SiteKind::AdderInternalBit => {
            if layer.spec.backend.family == Family::Exact {
                return invalid("exact multipliers have no modeled adder".into());
            }
            (layer.spec.kind.macs(), layer.spec.backend.adder_width())
        }
    };
    if site.element >= limit as u64 {
        return invalid(format!("element must be below {limit}"));
    }
    if site.bit >= width {
        return invalid(format!("bit must be below {width}"));
    }
    Ok(())
}

/// Execute one layer. Returns the outputs and the number of AdAM detections.
pub(super) fn run_layer(
    layer: &QuantLayer,
    levels: &[i32],
    input: &[f64],
    transient: &Transient,
    clamp: bool,
) -> (Vec<f64>, u64) {
    let kind = &layer.spec.kind;
    let backend = &layer.spec.backend;
    let max_code = layer.max_activation_code();
    let mut codes: Vec<u32> = input
        .iter()
        .map(|&x| (x / layer.input_scale).round().clamp(0.0, f64::from(max_code)) as u32)
        .collect();
    for &(e, bit) in &transient.activation {
        codes[e] ^= 1 << bit;
    }

    let rows = kind.rows();
    let positions = kind.positions();
    let k = kind.reduction_len();
    let rescale = layer.weights.scheme.scale() * layer.input_scale;
    let clamp_method = match layer.spec.protection {
        Protection::Clamp(m) if clamp => Some(m),
        _ => None,
    };
    let exact = backend.family == Family::Exact;
    let mut detections = 0;
    let mut out = Vec::with_capacity(rows * positions);
    for row in 0..rows {
        let wrow = &levels[row * k..(row + 1) * k];
        for pos in 0..positions {
            let o = row * positions + pos;
            let mut acc: i32 = 0;
            for (r, &level) in wrow.iter().enumerate() {
                let a = codes[kind.input_index(pos, r)];
                let mag = level.unsigned_abs();
                let product = if exact {
                    u64::from(mag) * u64::from(a)
                } else {
                    let flips = if transient.adder.is_empty() {
                        AdderFlips::NONE
                    } else {
                        transient.adder.get(&(o * k + r)).copied().unwrap_or_default()
                    };
                    let m = backend.multiply_trusted(mag, a, flips);
                    detections += u64::from(m.fault_detected);
                    m.product
                };
                let signed = if level < 0 { (product as i32).wrapping_neg() } else { product as i32 };
                acc = acc.wrapping_add(signed);
            }
            let y = f64::from(acc) * rescale + layer.bias[row];
            let z = match layer.spec.activation {
                Activation::Relu => y.max(0.0),
                Activation::None | Activation::Softmax => y,
            };
            out.push(match clamp_method {
                Some(m) => clamp_unit(z, layer.bounds, m),
                None => z,
            });
        }
    }
    (out, detections)
}

/// Single inference at invocation 0.
pub fn infer(model: &NetworkModel, input: &[f32], plan: &FaultPlan) -> Result<Vec<f64>, NetError> {
    FaultyModel::new(model, plan)?.infer(input, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    pub logits: Vec<Vec<f64>>,
    pub detections: u64,
}

/// Run the whole dataset under `plan`. Sample `i` is invocation `i`; weight
/// faults persist across the batch.
pub fn evaluate(model: &NetworkModel, dataset: &Dataset, plan: &FaultPlan) -> Result<EvalResult, NetError> {
    if dataset.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let faulty = FaultyModel::new(model, plan)?;
    let traces: Vec<LayerTrace> = (0..dataset.len())
        .into_par_iter()
        .map(|i| faulty.trace(dataset.row(i), i as u64, true))
        .collect::<Result<_, _>>()?;
    let correct = traces
        .iter()
        .zip(dataset.labels())
        .filter(|(t, &label)| argmax(t.logits()) == label as usize)
        .count();
    Ok(EvalResult {
        accuracy: correct as f64 / dataset.len() as f64,
        detections: traces.iter().map(|t| t.detections).sum(),
        logits: traces.into_iter().map(|mut t| t.outputs.pop().unwrap_or_default()).collect(),
    })
}

pub fn evaluate_accuracy(model: &NetworkModel, dataset: &Dataset, plan: &FaultPlan) -> Result<f64, NetError> {
    Ok(evaluate(model, dataset, plan)?.accuracy)
}

/// Per-layer (min, max) of fault-free outputs over `dataset`, with clamping
/// disabled.
pub fn profile_ranges(model: &NetworkModel, dataset: &Dataset) -> Result<Vec<Bounds>, NetError> {
    if dataset.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let clean = FaultyModel::new(model, &FaultPlan::empty())?;
    let traces: Vec<LayerTrace> = dataset
        .rows()
        .map(|row| clean.trace(row, 0, false))
        .collect::<Result<_, _>>()?;
    Ok((0..model.layers.len())
        .map(|l| {
            let outs: Vec<Vec<f64>> = traces.iter().map(|t| t.outputs[l].clone()).collect();
            observed_bounds(&outs)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_examples() {
        let b = Bounds::new(0.0, 6.0).unwrap();
        assert_eq!(clamp_unit(9.0, b, ClampMethod::M2), 6.0);
        assert_eq!(clamp_unit(9.0, b, ClampMethod::M1), 0.0);
        assert_eq!(clamp_unit(-4.0, b, ClampMethod::M3), 0.0);
        assert_eq!(clamp_unit(9.0, b, ClampMethod::M3), 6.0);
        for m in [ClampMethod::M1, ClampMethod::M2, ClampMethod::M3] {
            assert_eq!(clamp_unit(3.5, b, m), 3.5);
        }
    }
}
