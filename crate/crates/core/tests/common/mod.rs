#![allow(dead_code)]

use std::path::PathBuf;

use ftqnn::net::{Dataset, FloatModel, ModelManifest, NetworkModel};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/digits")
}

pub fn float_model() -> FloatModel {
    ModelManifest::load_model(&fixture_dir().join("model.toml")).expect("fixture model")
}

pub fn calibration() -> Dataset {
    Dataset::load(&fixture_dir().join("calib.ds")).expect("calibration split")
}

pub fn test_set() -> Dataset {
    Dataset::load(&fixture_dir().join("test.ds")).expect("test split")
}

pub fn build(float: &FloatModel) -> NetworkModel {
    NetworkModel::build(float, &calibration()).expect("model builds")
}

/// Floating-point Mitchell reference: `log2(x) ~ k + f` with the fraction
/// truncated to `w` bits, antilog `2^K (1 + s)` or `2^(K+1) s` on carry.
pub fn mitchell_oracle(a: u32, b: u32, n: u32, t: u32) -> u64 {
    if a == 0 || b == 0 {
        return 0;
    }
    let w = (n - 1 - t) as i32;
    let frac = |x: u32| {
        let k = x.ilog2() as i32;
        let f = (f64::from(x) / 2f64.powi(k)) - 1.0;
        (k, (f * 2f64.powi(w)).floor() / 2f64.powi(w))
    };
    let (ka, fa) = frac(a);
    let (kb, fb) = frac(b);
    let s = fa + fb;
    let p = if s < 1.0 { 2f64.powi(ka + kb) * (1.0 + s) } else { 2f64.powi(ka + kb + 1) * s };
    p.floor() as u64
}

/// MARE (percent) of the oracle over every nonzero n-bit pair.
pub fn oracle_mare(n: u32, t: u32) -> f64 {
    let top = 1u32 << n;
    let mut sum = 0.0;
    let mut count = 0u64;
    for a in 1..top {
        for b in 1..top {
            let exact = f64::from(a) * f64::from(b);
            sum += (mitchell_oracle(a, b, n, t) as f64 - exact).abs() / exact;
            count += 1;
        }
    }
    100.0 * sum / count as f64
}

/// Sample mean, standard error, and count of `xs`.
pub fn mean_se(xs: &[f64]) -> (f64, f64, usize) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt(), n)
}
