use super::engine::{run_layer, Transient};
use super::{Activation, Bounds, LayerSpec, NetError, Protection};
use crate::arith::Family;
use crate::faults::WordTensor;
use crate::quant::{self, QuantTensor};

use super::io::Dataset;

/// A network with real-valued weights, as loaded from a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatModel {
    pub name: String,
    pub weight_bits: u32,
    pub layers: Vec<LayerSpec>,
    pub weights: Vec<Vec<f32>>,
    pub biases: Vec<Vec<f32>>,
    /// Clamp bounds given explicitly; missing ones are profiled at build time.
    pub bounds: Vec<Option<Bounds>>,
}

impl FloatModel {
    pub fn new(
        name: String,
        weight_bits: u32,
        layers: Vec<LayerSpec>,
        weights: Vec<Vec<f32>>,
        biases: Vec<Vec<f32>>,
        bounds: Vec<Option<Bounds>>,
    ) -> Result<Self, NetError> {
        let model = Self { name, weight_bits, layers, weights, biases, bounds };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidModel(m));
        if self.layers.is_empty() {
            return bad("model has no layers".into());
        }
        if !(quant::MIN_BITS..=quant::MAX_BITS).contains(&self.weight_bits) {
            return bad(format!("weight_bits {} outside [2, 8]", self.weight_bits));
        }
        let n = self.layers.len();
        if self.weights.len() != n || self.biases.len() != n || self.bounds.len() != n {
            return bad("per-layer weight, bias and bounds lists must match the layer count".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.kind.validate().or_else(|m| bad(format!("layer `{}`: {m}", l.id)))?;
            l.backend.validate()?;
            if self.weights[i].len() != l.kind.weight_len() {
                return bad(format!(
                    "layer `{}`: {} weights, expected {}",
                    l.id,
                    self.weights[i].len(),
                    l.kind.weight_len()
                ));
            }
            if self.biases[i].len() != l.kind.rows() {
                return bad(format!("layer `{}`: bias length must be {}", l.id, l.kind.rows()));
            }
            if l.activation == Activation::Softmax && i + 1 != n {
                return bad(format!("layer `{}`: softmax is only allowed on the final layer", l.id));
            }
            // The multiplier sees |code - zero| <= 2^(b-1).
            if self.weight_bits > l.backend.width {
                return bad(format!(
                    "layer `{}`: {}-bit weight levels do not fit the {}-bit multiplier",
                    l.id, self.weight_bits, l.backend.width
                ));
            }
            if i + 1 < n && l.kind.out_len() != self.layers[i + 1].kind.in_len() {
                return bad(format!(
                    "layer `{}` produces {} values but `{}` expects {}",
                    l.id,
                    l.kind.out_len(),
                    self.layers[i + 1].id,
                    self.layers[i + 1].kind.in_len()
                ));
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].kind.in_len()
    }

    pub fn param_count(&self) -> u64 {
        self.weights.iter().map(|w| w.len() as u64).sum()
    }

    pub fn with_protection(&self, protection: Protection) -> Self {
        let mut m = self.clone();
        for l in &mut m.layers {
            l.protection = protection;
        }
        m
    }

    pub fn with_backend(&self, backend: crate::arith::MultConfig) -> Self {
        let mut m = self.clone();
        for l in &mut m.layers {
            l.backend = backend;
        }
        m
    }

    pub fn with_weight_bits(&self, bits: u32) -> Self {
        Self { weight_bits: bits, ..self.clone() }
    }
}

/// One layer as executed: stored weight words, decoded signed levels,
/// activation scale of its input, and clamp bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayer {
    pub spec: LayerSpec,
    pub weights: QuantTensor,
    pub(super) levels: Vec<i32>,
    pub bias: Vec<f64>,
    /// Real value of one activation code step at this layer's input.
    pub input_scale: f64,
    pub bounds: Bounds,
}

impl QuantLayer {
    pub fn activation_width(&self) -> u32 {
        self.spec.backend.width
    }

    pub fn max_activation_code(&self) -> u32 {
        (1 << self.activation_width()) - 1
    }

    pub(super) fn decode_levels(weights: &QuantTensor, words: &[u32]) -> Vec<i32> {
        words.iter().map(|&w| weights.scheme.level(weights.read_code(w))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub name: String,
    pub layers: Vec<QuantLayer>,
}

impl NetworkModel {
    /// Quantize `float` and calibrate it on `calibration`.
    ///
    /// Layer by layer, the input activation scale is set so the largest
    /// calibration input maps to the top code, then the layer is run
    /// fault-free to produce the next layer's calibration inputs. Layers
    /// without explicit bounds get the observed output range.
    pub fn build(float: &FloatModel, calibration: &Dataset) -> Result<Self, NetError> {
        float.validate()?;
        if calibration.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        if calibration.cols() != float.input_len() {
            return Err(NetError::ShapeMismatch(format!(
                "calibration rows have {} features, model expects {}",
                calibration.cols(),
                float.input_len()
            )));
        }
        let mut inputs: Vec<Vec<f64>> = calibration
            .rows()
            .map(|r| r.iter().map(|&x| f64::from(x)).collect())
            .collect();
        let mut layers = Vec::with_capacity(float.layers.len());
        for (i, spec) in float.layers.iter().enumerate() {
            let protected = spec.protection == Protection::MsbTriplication;
            let weights = QuantTensor::from_weights(&float.weights[i], float.weight_bits, protected)?;
            let levels = QuantLayer::decode_levels(&weights, &weights.words);
            let top = inputs.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
            let max_code = f64::from((1u32 << spec.backend.width) - 1);
            let input_scale = if top > 0.0 { top / max_code } else { 1.0 };
            let mut layer = QuantLayer {
                spec: spec.clone(),
                weights,
                levels,
                bias: float.biases[i].iter().map(|&b| f64::from(b)).collect(),
                input_scale,
                bounds: Bounds { lower: 0.0, upper: 0.0 },
            };
            let outputs: Vec<Vec<f64>> = inputs
                .iter()
                .map(|x| run_layer(&layer, &layer.levels, x, &Transient::default(), false).0)
                .collect();
            layer.bounds = match float.bounds[i] {
                Some(b) => b,
                None => observed_bounds(&outputs),
            };
            layers.push(layer);
            inputs = outputs;
        }
        Ok(Self { name: float.name.clone(), layers })
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].spec.kind.in_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.kind.out_len())
    }

    /// Stored weight tensors, as targeted by weight-fault plans.
    pub fn weight_shape(&self) -> Vec<WordTensor> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| WordTensor {
                target: i as u32,
                len: l.weights.words.len(),
                width: l.weights.stored_width(),
            })
            .collect()
    }

    pub fn param_count(&self) -> u64 {
        self.layers.iter().map(|l| l.weights.words.len() as u64).sum()
    }

    pub fn memory_bits(&self) -> u64 {
        self.layers.iter().map(|l| l.weights.memory_bits()).sum()
    }

    pub fn mac_count(&self) -> u64 {
        self.layers.iter().map(|l| l.spec.kind.macs() as u64).sum()
    }

    /// MACs whose weight passes through a majority voter.
    pub fn voted_mac_count(&self) -> u64 {
        self.layers
            .iter()
            .filter(|l| l.weights.protected)
            .map(|l| l.spec.kind.macs() as u64)
            .sum()
    }

    pub fn bounds(&self) -> Vec<Bounds> {
        self.layers.iter().map(|l| l.bounds).collect()
    }

    pub fn set_bounds(&mut self, bounds: &[Bounds]) -> Result<(), NetError> {
        if bounds.len() != self.layers.len() {
            return Err(NetError::ShapeMismatch(format!(
                "{} bounds for {} layers",
                bounds.len(),
                self.layers.len()
            )));
        }
        for (l, b) in self.layers.iter_mut().zip(bounds) {
            l.bounds = Bounds::new(b.lower, b.upper)?;
        }
        Ok(())
    }

    pub fn has_adder_model(&self, layer: usize) -> bool {
        self.layers[layer].spec.backend.family != Family::Exact
    }
}

pub(super) fn observed_bounds(outputs: &[Vec<f64>]) -> Bounds {
    let mut it = outputs.iter().flatten();
    let first = it.next().copied().unwrap_or(0.0);
    it.fold(Bounds { lower: first, upper: first }, |b, &x| Bounds {
        lower: b.lower.min(x),
        upper: b.upper.max(x),
    })
}
