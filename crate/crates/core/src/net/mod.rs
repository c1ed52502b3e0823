//! MAC-level quantized inference with per-layer multiplier backends,
//! activation-range profiling, clamp-based mitigation, and fault hooks at
//! every weight read, activation read, and multiplier invocation.
//!
//! Every scalar product goes through the layer's [`MultConfig`]. Weights are
//! centered unsigned codes; the multiplier sees the magnitude of the signed
//! level and the unsigned activation code, and the sign is applied in the
//! 32-bit accumulator. The accumulator is rescaled once per neuron by the
//! product of the weight and activation scales.
//!
//! Activations are quantized per layer input to unsigned `n`-bit codes
//! (`n` = backend width) with zero point 0, so layer inputs must be
//! nonnegative (input features in `[0, 1]`, ReLU hidden layers).

mod engine;
mod io;
mod model;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{ArithError, MultConfig};
use crate::faults::FaultSite;
use crate::quant::QuantError;

pub use engine::{
    clamp_unit, evaluate, evaluate_accuracy, infer, profile_ranges, EvalResult, FaultyModel,
    LayerTrace,
};
pub use io::{Dataset, LayerEntry, ModelManifest};
pub use model::{FloatModel, NetworkModel, QuantLayer};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid fault site {site:?}: {reason}")]
    InvalidFaultSite { site: FaultSite, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error("{path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense { in_dim: usize, out_dim: usize },
    /// Valid (unpadded) convolution lowered to a matmul. Input layout is
    /// `[channel][row][col]`; weights are `[out_channel][in_channel][ky][kx]`.
    Conv2dAsMatmul {
        in_channels: usize,
        in_height: usize,
        in_width: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
}

impl LayerKind {
    pub fn in_len(&self) -> usize {
        match *self {
            LayerKind::Dense { in_dim, .. } => in_dim,
            LayerKind::Conv2dAsMatmul { in_channels, in_height, in_width, .. } => {
                in_channels * in_height * in_width
            }
        }
    }

    /// Output positions per output channel (1 for dense layers).
    pub fn positions(&self) -> usize {
        match *self {
            LayerKind::Dense { .. } => 1,
            LayerKind::Conv2dAsMatmul { .. } => {
                let (oh, ow) = self.out_hw();
                oh * ow
            }
        }
    }

    /// Weight rows: neurons or output channels.
    pub fn rows(&self) -> usize {
        match *self {
            LayerKind::Dense { out_dim, .. } => out_dim,
            LayerKind::Conv2dAsMatmul { out_channels, .. } => out_channels,
        }
    }

    pub fn out_len(&self) -> usize {
        self.rows() * self.positions()
    }

    /// MACs per output value (weights per row).
    pub fn reduction_len(&self) -> usize {
        match *self {
            LayerKind::Dense { in_dim, .. } => in_dim,
            LayerKind::Conv2dAsMatmul { in_channels, kernel, .. } => in_channels * kernel * kernel,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.rows() * self.reduction_len()
    }

    pub fn macs(&self) -> usize {
        self.out_len() * self.reduction_len()
    }

    fn out_hw(&self) -> (usize, usize) {
        match *self {
            LayerKind::Dense { .. } => (1, 1),
            LayerKind::Conv2dAsMatmul { in_height, in_width, kernel, stride, .. } => {
                ((in_height - kernel) / stride + 1, (in_width - kernel) / stride + 1)
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            LayerKind::Dense { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err("dense dimensions must be positive".into());
                }
            }
            LayerKind::Conv2dAsMatmul {
                in_channels,
                in_height,
                in_width,
                out_channels,
                kernel,
                stride,
            } => {
                if [in_channels, in_height, in_width, out_channels, kernel, stride].contains(&0) {
                    return Err("conv dimensions must be positive".into());
                }
                if kernel > in_height || kernel > in_width {
                    return Err(format!(
                        "kernel {kernel} larger than input {in_height}x{in_width}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Input element read by MAC `reduction` of output position `position`.
    fn input_index(&self, position: usize, reduction: usize) -> usize {
        match *self {
            LayerKind::Dense { .. } => reduction,
            LayerKind::Conv2dAsMatmul { in_height, in_width, kernel, stride, .. } => {
                let (_, ow) = self.out_hw();
                let (oy, ox) = (position / ow, position % ow);
                let c = reduction / (kernel * kernel);
                let ky = reduction / kernel % kernel;
                let kx = reduction % kernel;
                (c * in_height + oy * stride + ky) * in_width + ox * stride + kx
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
    /// Final-layer marker; the engine returns the pre-softmax logits.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClampMethod {
    /// Replace out-of-range values with the lower bound.
    M1,
    /// Replace with the upper bound.
    M2,
    /// Upper bound for positive values, lower bound otherwise.
    M3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Protection {
    #[default]
    None,
    Clamp(ClampMethod),
    MsbTriplication,
}

impl fmt::Display for Protection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protection::None => "none",
            Protection::Clamp(ClampMethod::M1) => "clamp-m1",
            Protection::Clamp(ClampMethod::M2) => "clamp-m2",
            Protection::Clamp(ClampMethod::M3) => "clamp-m3",
            Protection::MsbTriplication => "msb-triplication",
        })
    }
}

impl FromStr for Protection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => Protection::None,
            "clamp-m1" => Protection::Clamp(ClampMethod::M1),
            "clamp-m2" => Protection::Clamp(ClampMethod::M2),
            "clamp-m3" => Protection::Clamp(ClampMethod::M3),
            "msb-triplication" => Protection::MsbTriplication,
            other => {
                return Err(format!(
                    "unknown protection `{other}` (expected none, clamp-m1, clamp-m2, clamp-m3, msb-triplication)"
                ))
            }
        })
    }
}

impl Serialize for Protection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Protection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, NetError> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(NetError::InvalidModel(format!("bounds [{lower}, {upper}] are inverted")));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Smallest bounds covering both.
    pub fn union(&self, other: &Bounds) -> Bounds {
        Bounds { lower: self.lower.min(other.lower), upper: self.upper.max(other.upper) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub activation: Activation,
    pub backend: MultConfig,
    pub protection: Protection,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protection_labels_round_trip() {
        for p in [
            Protection::None,
            Protection::Clamp(ClampMethod::M1),
            Protection::Clamp(ClampMethod::M2),
            Protection::Clamp(ClampMethod::M3),
            Protection::MsbTriplication,
        ] {
            assert_eq!(p.to_string().parse::<Protection>(), Ok(p));
        }
        assert!("tmr".parse::<Protection>().is_err());
    }

    #[test]
    fn conv_geometry() {
        let k = LayerKind::Conv2dAsMatmul {
            in_channels: 2,
            in_height: 5,
            in_width: 4,
            out_channels: 3,
            kernel: 3,
            stride: 1,
        };
        assert_eq!(k.in_len(), 40);
        assert_eq!(k.positions(), 3 * 2);
        assert_eq!(k.out_len(), 18);
        assert_eq!(k.reduction_len(), 18);
        // Last MAC of the last position reads channel 1, row 4, col 3.
        assert_eq!(k.input_index(5, 17), (5 + 4) * 4 + 3);
        assert!(k.validate().is_ok());
        let bad = LayerKind::Conv2dAsMatmul {
            in_channels: 1,
            in_height: 2,
            in_width: 2,
            out_channels: 1,
            kernel: 3,
            stride: 1,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bounds() {
        assert!(Bounds::new(1.0, 0.0).is_err());
        assert!(Bounds::new(f64::NAN, 0.0).is_err());
        let b = Bounds::new(0.0, 6.0).unwrap();
        assert!(b.contains(6.0) && !b.contains(6.1));
    }
}
