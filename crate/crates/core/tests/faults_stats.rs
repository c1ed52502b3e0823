mod common;

use ftqnn::faults::{plan_ber_weight_faults, plan_ber_weight_faults_with, BerMode, RngSpec, WordTensor};

const SHAPE: [WordTensor; 1] = [WordTensor { target: 0, len: 1000, width: 8 }];

#[test]
fn ber_site_count_matches_binomial_mean() {
    let counts: Vec<f64> = (0..10_000)
        .map(|seed| plan_ber_weight_faults(&SHAPE, 1e-3, RngSpec::new(seed, 0)).unwrap().len() as f64)
        .collect();
    let (mean, se, _) = common::mean_se(&counts);
    assert!((mean - 8.0).abs() <= 0.3, "mean {mean}");
    // Binomial(8000, 1e-3) has variance ~7.99.
    assert!((se * se * 10_000.0 - 7.992).abs() < 0.5);
}

#[test]
fn higher_ber_flips_a_superset() {
    for seed in 0..50 {
        let lo = plan_ber_weight_faults(&SHAPE, 1e-3, RngSpec::new(seed, 0)).unwrap();
        let hi = plan_ber_weight_faults(&SHAPE, 1e-2, RngSpec::new(seed, 0)).unwrap();
        assert!(lo.sites().iter().all(|s| hi.sites().contains(s)));
    }
}

#[test]
fn fixed_count_is_exact() {
    for seed in 0..20 {
        let p = plan_ber_weight_faults_with(&SHAPE, 1e-3, RngSpec::new(seed, 3), BerMode::FixedCount).unwrap();
        assert_eq!(p.len(), 8);
    }
}

#[test]
fn streams_are_independent() {
    let a = plan_ber_weight_faults(&SHAPE, 0.01, RngSpec::new(7, 0)).unwrap();
    let b = plan_ber_weight_faults(&SHAPE, 0.01, RngSpec::new(7, 1)).unwrap();
    assert_ne!(a.sites(), b.sites());
}
