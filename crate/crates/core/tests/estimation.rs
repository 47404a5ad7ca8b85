use marbubble::estimation::{
    gcov_estimate, gcov_objective, gcov_spec_test, ols_noncausal, GcovConfig, GcovOptions, Order, TransformSpec,
};
use marbubble::model::simulate;
use marbubble::{ErrorDist, MarModel};
use proptest::prelude::*;

fn t3(phi: f64, psi: f64) -> MarModel {
    MarModel::mar11(phi, psi, ErrorDist::StudentT { df: 3.0 })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn objective_at_truth_shrinks_with_sample_size() {
    let cfg = GcovConfig::default();
    let m = t3(0.3, 0.9);
    let at = |t_len: usize| {
        median(
            (0..50)
                .map(|seed| {
                    let y = simulate(&m, t_len, seed, 200).unwrap().into_values();
                    gcov_objective(&y, Order::MAR11, &[0.3, 0.9], &cfg).unwrap()
                })
                .collect(),
        )
    };
    let (small, large) = (at(400), at(2000));
    assert!(
        large < 0.5 * small,
        "median objective {small} at T=400, {large} at T=2000"
    );
}

#[test]
fn argmin_is_scale_invariant() {
    let opts = GcovOptions::with_config(GcovConfig::new(TransformSpec::integer_powers(2), 2));
    for seed in [1, 2, 3] {
        let y = simulate(&t3(0.4, 0.7), 400, seed, 200).unwrap().into_values();
        let base = gcov_estimate(&y, Order::MAR11, &opts).unwrap();
        for c in [0.01, 25.0] {
            let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
            let fit = gcov_estimate(&scaled, Order::MAR11, &opts).unwrap();
            for (a, b) in base.theta.iter().zip(&fit.theta) {
                assert!((a - b).abs() < 1e-4, "seed {seed}, scale {c}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn specification_test_size_under_correct_model() {
    let opts = GcovOptions::default();
    let m = t3(0.3, 0.9);
    let (mut rejections, mut fits) = (0, 0);
    for seed in 0..200 {
        let y = simulate(&m, 400, seed, 200).unwrap().into_values();
        if let Ok(fit) = gcov_estimate(&y, Order::MAR11, &opts) {
            fits += 1;
            rejections += usize::from(gcov_spec_test(&fit, y.len()).unwrap().reject_5pct);
        }
    }
    let rate = rejections as f64 / fits as f64;
    assert!((0.01..=0.12).contains(&rate), "rejection rate {rate} over {fits} fits");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reverse_time_ols_matches_forward_slope(y in prop::collection::vec(-100.0f64..100.0, 10..200)) {
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        prop_assume!(y[..y.len() - 1].iter().any(|v| v.abs() > 1e-3));
        let fit = ols_noncausal(&rev).unwrap();
        let (sxy, sxx) = y.windows(2).fold((0.0, 0.0), |(a, b), w| (a + w[0] * w[1], b + w[0] * w[0]));
        let forward = sxy / sxx;
        prop_assert!((fit.psi - forward).abs() <= 1e-9 * (1.0 + forward.abs()));
    }
}
