use marbubble::bubble::{empirical_quantile, forward_conditional_prob, XiStats};
use marbubble::estimation::{gcov_estimate, GcovConfig, GcovOptions, Order, ParamEstimate, TransformSpec};
use marbubble::model::simulate;
use marbubble::{ErrorDist, MarModel};
use proptest::prelude::*;

const OMEGA: [[f64; 2]; 2] = [[0.06, -0.01], [-0.01, 0.03]];

fn cauchy_path(seed: u64) -> Vec<f64> {
    let m = MarModel::mar11(0.3, 0.9, ErrorDist::Cauchy { scale: 1.0 });
    simulate(&m, 400, seed, 200).unwrap().into_values()
}

fn est(omega: [[f64; 2]; 2]) -> ParamEstimate {
    ParamEstimate::known(1, 1, 0.3, 0.9, omega, 399)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn statistics_are_scale_free(seed in 0u64..1000, c in 1e-3f64..1e3, h in 0usize..5) {
        let y = cauchy_path(seed);
        let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
        let (a, b) = (XiStats::new(&y, est(OMEGA)).unwrap(), XiStats::new(&scaled, est(OMEGA)).unwrap());
        for t in 0..y.len() {
            match (a.point(t, h), b.point(t, h)) {
                (Some(p), Some(q)) => {
                    prop_assert_eq!(p.rejected, q.rejected);
                    prop_assert!((p.xi - q.xi).abs() < 1e-12 * p.xi.abs().max(1.0));
                }
                (None, None) => {}
                _ => prop_assert!(false, "exclusion differs at t = {}", t),
            }
        }
    }

    #[test]
    fn inflating_omega_never_creates_rejections(seed in 0u64..1000, factor in 1.0f64..50.0, h in 0usize..5) {
        let y = cauchy_path(seed);
        let wide = OMEGA.map(|row| row.map(|v| v * factor));
        let (a, b) = (XiStats::new(&y, est(OMEGA)).unwrap(), XiStats::new(&y, est(wide)).unwrap());
        for t in 0..y.len() {
            if let (Some(p), Some(q)) = (a.point(t, h), b.point(t, h)) {
                prop_assert!(!(p.decision() == 1 && q.decision() == 0), "flip at t = {}", t);
            }
        }
    }

    /// At h = 0 the statistic and its standard error depend on y only through y_{t+1}/y_t.
    #[test]
    fn lag_zero_statistics_depend_on_the_growth_ratio(
        ratio in -5.0f64..5.0,
        level in prop::sample::select(vec![-40.0, -0.5, 0.3, 7.0, 900.0]),
        other in prop::sample::select(vec![-3.0, 0.01, 2.0, 55.0]),
    ) {
        let series = |lvl: f64| {
            let mut y = vec![1.0; 30];
            y[10] = lvl;
            y[11] = lvl * ratio;
            y
        };
        let (ya, yb) = (series(level), series(other));
        let (a, b) = (XiStats::new(&ya, est(OMEGA)).unwrap(), XiStats::new(&yb, est(OMEGA)).unwrap());
        let (p, q) = (a.point(10, 0).unwrap(), b.point(10, 0).unwrap());
        prop_assert!((p.xi - q.xi).abs() <= 1e-12 * p.xi.abs().max(1.0));
        prop_assert!((p.sigma - q.sigma).abs() <= 1e-12 * p.sigma.max(1.0));
    }
}

#[test]
fn forward_probability_approaches_tail_limit() {
    let psi: f64 = 0.9;
    let m = MarModel::mar01(psi, ErrorDist::StudentT { df: 3.0 });
    let y = simulate(&m, 1_000_000, 3, 200).unwrap().into_values();
    let limit = psi.powi(3);
    let high = forward_conditional_prob(&y, 0.9999).unwrap().unwrap();
    assert!((high - limit).abs() <= 0.1, "p = {high} at the 0.9999 level");
    let low = forward_conditional_prob(&y, 0.975).unwrap().unwrap();
    assert!(
        (low - limit).abs() > (high - limit).abs(),
        "p = {low} at 0.975, {high} at 0.9999"
    );
}

#[test]
fn white_noise_delta_xi_leaves_the_band() {
    let wn = MarModel::white_noise(ErrorDist::StudentT { df: 3.0 });
    let (mut out, mut total) = (0, 0);
    for seed in 0..20 {
        let y = simulate(&wn, 400, seed, 200).unwrap().into_values();
        let st = XiStats::new(&y, est(OMEGA)).unwrap();
        for (i, d) in st.delta_xi().iter().enumerate() {
            if let (Some(d), Some(p)) = (d, st.point(i + 1, 0)) {
                total += 1;
                out += usize::from(d.abs() > p.band_halfwidth);
            }
        }
    }
    assert!(out as f64 > 0.5 * total as f64, "{out}/{total} beyond the band");
}

/// Rising phase before the global peak of Cauchy MAR(1,1) paths, true
/// coefficients and the fitted Ω̂: |Δξ̂| should stay inside the band.
#[test]
#[ignore = "fails: about 54% of rising-phase points satisfy |Δξ̂| < band; the delta-method band is too narrow for Cauchy paths"]
fn delta_xi_is_flat_during_bubbles() {
    let opts = GcovOptions::with_config(GcovConfig::new(TransformSpec::integer_powers(2), 4));
    let (mut inside, mut total) = (0, 0);
    for seed in 0..200 {
        let y = cauchy_path(seed);
        let Ok(fit) = gcov_estimate(&y, Order::MAR11, &opts) else {
            continue;
        };
        let fitted = fit.estimate();
        let st = XiStats::new(&y, est(fitted.omega)).unwrap();
        let q = empirical_quantile(&y, 0.975).unwrap();
        let tp = (0..y.len()).max_by(|a, b| y[*a].total_cmp(&y[*b])).unwrap();
        let mut start = tp;
        while start >= 2 && y[start - 1] > q && y[start - 1] < y[start] {
            start -= 1;
        }
        let d = st.delta_xi();
        for s in start..tp {
            if let (Some(dx), Some(p)) = (d.get(s).copied().flatten(), st.point(s + 1, 0)) {
                total += 1;
                inside += usize::from(dx.abs() < p.band_halfwidth);
            }
        }
    }
    assert!(inside as f64 >= 0.9 * total as f64, "{inside}/{total} inside the band");
}
