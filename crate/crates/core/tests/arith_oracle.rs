mod common;

use ftqnn::arith::{
    adam_mul, duplication_span, exact_mul, mare, mitchell_mul, AdderFlips, MultConfig, SamplePolicy, UWord,
};
use proptest::prelude::*;

use common::{mitchell_oracle, oracle_mare};

fn w8(x: u32) -> UWord {
    UWord::new(x, 8).unwrap()
}

#[test]
fn mitchell_matches_float_oracle_exhaustively() {
    for t in 0..7 {
        let cfg = MultConfig::mitchell(8, t);
        for a in 0..256 {
            for b in 0..256 {
                let got = mitchell_mul(w8(a), w8(b), &cfg).unwrap().product;
                assert_eq!(got, mitchell_oracle(a, b, 8, t), "{a} x {b}, t={t}");
            }
        }
    }
}

#[test]
fn adam_without_faults_equals_mitchell() {
    for t in 0..7 {
        let m = MultConfig::mitchell(8, t);
        for h in 0..=(7 - t) {
            let c = MultConfig::adam(8, t, h);
            for a in 0..256 {
                for b in 0..256 {
                    let x = adam_mul(w8(a), w8(b), &c, AdderFlips::NONE).unwrap();
                    assert_eq!(x.product, mitchell_mul(w8(a), w8(b), &m).unwrap().product);
                    assert!(!x.fault_detected);
                }
            }
        }
    }
}

#[test]
fn exhaustive_mare_matches_oracle() {
    let mut prev = 0.0;
    for t in 0..7 {
        let got = mare(&MultConfig::mitchell(8, t), SamplePolicy::Exhaustive).unwrap();
        let want = oracle_mare(8, t);
        assert!((got - want).abs() < 1e-9, "t={t}: {got} vs {want}");
        assert!(got > prev, "MARE should grow with truncation");
        prev = got;
    }
    assert_eq!(mare(&MultConfig::exact(8), SamplePolicy::Exhaustive).unwrap(), 0.0);
}

#[test]
fn detection_regions_nest_in_h() {
    let w = 7;
    for a in 1..256 {
        for b in 1..256 {
            let mut prev = 0;
            for h in 0..=w {
                let s = duplication_span(w8(a), w8(b), &MultConfig::adam(8, 0, h));
                assert!(s >= prev && s <= h);
                prev = s;
            }
        }
    }
}

proptest! {
    #[test]
    fn mitchell_never_overestimates(a in 0u32..65536, b in 0u32..65536, t in 0u32..15) {
        let cfg = MultConfig::mitchell(16, t);
        let (x, y) = (UWord::new(a, 16).unwrap(), UWord::new(b, 16).unwrap());
        prop_assert!(mitchell_mul(x, y, &cfg).unwrap().product <= exact_mul(x, y));
    }

    #[test]
    fn mitchell_16_bit_matches_oracle(a in 0u32..65536, b in 0u32..65536, t in 0u32..15) {
        let cfg = MultConfig::mitchell(16, t);
        let (x, y) = (UWord::new(a, 16).unwrap(), UWord::new(b, 16).unwrap());
        prop_assert_eq!(mitchell_mul(x, y, &cfg).unwrap().product, mitchell_oracle(a, b, 16, t));
    }

    #[test]
    fn flips_inside_span_are_detected(a in 1u32..256, b in 1u32..256, h in 0u32..8, pick in 0u32..64) {
        let cfg = MultConfig::adam(8, 0, h);
        let span = duplication_span(w8(a), w8(b), &cfg);
        prop_assume!(span > 0);
        // Sum bits w-span..w plus the carry-out at bit w.
        let w = cfg.mantissa_width();
        let bit = w - span + pick % (span + 1);
        let out = adam_mul(w8(a), w8(b), &cfg, AdderFlips::single(bit)).unwrap();
        prop_assert!(out.fault_detected && out.mitigated);
    }
}
