//! Model manifests and dataset files.
//!
//! A model manifest is TOML:
//!
//! ```toml
//! name = "digits-mlp"
//! weight_bits = 8
//!
//! [[layers]]
//! id = "fc1"
//! kind = "dense"            # or "conv2d"
//! in_dim = 64
//! out_dim = 32
//! activation = "relu"       # relu | none | softmax
//! backend = { family = "adam", width = 8, trunc = 2, dup = 4 }
//! protection = "clamp-m3"   # none | clamp-m1 | clamp-m2 | clamp-m3 | msb-triplication
//! weights = "fc1.w.bin"     # little-endian f32, [rows][reduction]
//! bias = "fc1.b.bin"        # optional, one f32 per row
//! bounds = [0.0, 6.0]       # optional clamp bounds
//! ```
//!
//! Conv layers use `in_channels`, `in_height`, `in_width`, `out_channels`,
//! `kernel`, `stride` instead of `in_dim`/`out_dim`.
//!
//! A dataset file is little-endian binary: magic `FTDS`, version u32 (1),
//! rows u32, cols u32, `rows * cols` f32 features, `rows` u32 labels.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activation, Bounds, LayerKind, LayerSpec, NetError, Protection};
use crate::arith::MultConfig;
use crate::quant::read_f32_file;

use super::model::FloatModel;

const DATASET_MAGIC: &[u8; 4] = b"FTDS";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub name: String,
    pub weight_bits: u32,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    pub activation: Activation,
    pub backend: MultConfig,
    #[serde(default)]
    pub protection: Protection,
    pub weights: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
}

impl LayerEntry {
    fn layer_kind(&self) -> Result<LayerKind, NetError> {
        let need = |v: Option<usize>, key: &str| {
            v.ok_or_else(|| NetError::InvalidModel(format!("layer `{}`: missing `{key}`", self.id)))
        };
        match self.kind.as_str() {
            "dense" => Ok(LayerKind::Dense {
                in_dim: need(self.in_dim, "in_dim")?,
                out_dim: need(self.out_dim, "out_dim")?,
            }),
            "conv2d" => Ok(LayerKind::Conv2dAsMatmul {
                in_channels: need(self.in_channels, "in_channels")?,
                in_height: need(self.in_height, "in_height")?,
                in_width: need(self.in_width, "in_width")?,
                out_channels: need(self.out_channels, "out_channels")?,
                kernel: need(self.kernel, "kernel")?,
                stride: self.stride.unwrap_or(1),
            }),
            other => Err(NetError::InvalidModel(format!(
                "layer `{}`: unknown kind `{other}` (expected dense or conv2d)",
                self.id
            ))),
        }
    }
}

impl ModelManifest {
    pub fn parse(text: &str) -> Result<Self, NetError> {
        toml::from_str(text).map_err(|e| NetError::Load {
            path: "<manifest>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path).map_err(|e| load_err(path, e))?;
        toml::from_str(&text).map_err(|e| load_err(path, e))
    }

    /// Load the manifest and every weight file it references (relative to
    /// the manifest's directory).
    pub fn load_model(path: &Path) -> Result<FloatModel, NetError> {
        let manifest = Self::load(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        manifest.resolve(dir)
    }

    pub fn resolve(&self, dir: &Path) -> Result<FloatModel, NetError> {
        let mut specs = Vec::new();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut bounds = Vec::new();
        for entry in &self.layers {
            let kind = entry.layer_kind()?;
            kind.validate()
                .map_err(|m| NetError::InvalidModel(format!("layer `{}`: {m}", entry.id)))?;
            let wpath = dir.join(&entry.weights);
            let w = read_f32_file(&wpath, kind.weight_len()).map_err(|e| load_err(&wpath, e))?;
            let b = match &entry.bias {
                Some(p) => {
                    let bpath = dir.join(p);
                    read_f32_file(&bpath, kind.rows()).map_err(|e| load_err(&bpath, e))?
                }
                None => vec![0.0; kind.rows()],
            };
            specs.push(LayerSpec {
                id: entry.id.clone(),
                kind,
                activation: entry.activation,
                backend: entry.backend,
                protection: entry.protection,
            });
            weights.push(w);
            biases.push(b);
            bounds.push(match entry.bounds {
                Some([lo, hi]) => Some(Bounds::new(lo, hi)?),
                None => None,
            });
        }
        FloatModel::new(self.name.clone(), self.weight_bits, specs, weights, biases, bounds)
    }
}

fn load_err(path: &Path, e: impl std::fmt::Display) -> NetError {
    NetError::Load { path: path.display().to_string(), message: e.to_string() }
}

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    cols: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(cols: usize, features: Vec<f32>, labels: Vec<u32>) -> Result<Self, NetError> {
        if cols == 0 || features.len() != cols * labels.len() {
            return Err(NetError::ShapeMismatch(format!(
                "{} features for {} rows of {} columns",
                features.len(),
                labels.len(),
                cols
            )));
        }
        Ok(Self { cols, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.features.chunks_exact(self.cols)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// First `n` rows (or all, if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            cols: self.cols,
            features: self.features[..n * self.cols].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * (self.features.len() + self.labels.len()));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for f in &self.features {
            out.extend_from_slice(&f.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 16 || &bytes[..4] != DATASET_MAGIC {
            return Err("not a dataset file (bad magic)".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        let version = u32_at(4);
        if version != DATASET_VERSION {
            return Err(format!("unsupported dataset version {version}"));
        }
        let rows = u32_at(8) as usize;
        let cols = u32_at(12) as usize;
        let expected = 16 + 4 * (rows * cols + rows);
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes for {rows}x{cols}, found {}", bytes.len()));
        }
        let body = &bytes[16..];
        let features = body[..4 * rows * cols]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let labels = body[4 * rows * cols..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Dataset::new(cols, features, labels).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let bytes = std::fs::read(path).map_err(|e| load_err(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| load_err(path, m))
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| load_err(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let ds = Dataset::new(3, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.125], vec![2, 7]).unwrap();
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.row(1), &[0.25, 0.75, 0.125]);
        assert!(Dataset::from_bytes(&ds.to_bytes()[..20]).is_err());
        assert!(Dataset::new(3, vec![0.0; 4], vec![1]).is_err());
    }

    #[test]
    fn manifest_rejects_unknown_keys() {
        let text = r#"
name = "m"
weight_bits = 8
colour = "red"
layers = []
"#;
        let err = ModelManifest::parse(text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn manifest_parses_backend_and_protection() {
        let text = r#"
name = "m"
weight_bits = 4

[[layers]]
id = "c1"
kind = "conv2d"
in_channels = 1
in_height = 4
in_width = 4
out_channels = 2
kernel = 3
activation = "relu"
backend = { family = "adam", width = 8, trunc = 2, dup = 4 }
protection = "clamp-m3"
weights = "c1.bin"
bounds = [0.0, 6.0]
"#;
        let m = ModelManifest::parse(text).unwrap();
        let l = &m.layers[0];
        assert_eq!(l.backend, MultConfig::adam(8, 2, 4));
        assert_eq!(l.protection, Protection::Clamp(super::super::ClampMethod::M3));
        assert_eq!(
            l.layer_kind().unwrap(),
            LayerKind::Conv2dAsMatmul {
                in_channels: 1,
                in_height: 4,
                in_width: 4,
                out_channels: 2,
                kernel: 3,
                stride: 1
            }
        );
    }
}
