//! Least-squares cubic regression splines with knots at a fixed calendar
//! spacing, anchored at the first observation.

use chrono::{Months, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};

/// Boundary behaviour of the fitted spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplineBoundary {
    /// Unconstrained cubic pieces (B-spline basis); reproduces any cubic.
    #[default]
    Free,
    /// Second derivative zero at both ends.
    Natural,
}

#[derive(Debug, Clone)]
pub struct SplineDetrend {
    /// Observed minus fitted trend.
    pub residual: TimeSeries,
    pub trend: Vec<f64>,
    /// Interior knot dates.
    pub knots: Vec<NaiveDate>,
}

/// Fits a cubic spline trend with knots every `knot_spacing_months` and
/// returns the residual series.
pub fn spline_detrend(ts: &TimeSeries, knot_spacing_months: u32, boundary: SplineBoundary) -> Result<SplineDetrend> {
    if knot_spacing_months == 0 {
        return Err(Error::validation("knot spacing must be positive"));
    }
    let (first, last) = match (ts.dates().first(), ts.dates().last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::validation("empty series")),
    };
    let one_interval = first
        .checked_add_months(Months::new(knot_spacing_months))
        .ok_or_else(|| Error::validation("date overflow"))?;
    if last < one_interval {
        return Err(Error::validation(format!(
            "series spans less than one knot interval of {knot_spacing_months} months"
        )));
    }

    let mut knots = Vec::new();
    for k in 1.. {
        let knot = first
            .checked_add_months(Months::new(knot_spacing_months * k))
            .ok_or_else(|| Error::validation("date overflow"))?;
        if knot >= last {
            break;
        }
        knots.push(knot);
    }

    let span = (last - first).num_days() as f64;
    let x: Vec<f64> = ts
        .dates()
        .iter()
        .map(|d| (*d - first).num_days() as f64 / span)
        .collect();
    let interior: Vec<f64> = knots.iter().map(|d| (*d - first).num_days() as f64 / span).collect();

    let basis = |xi: f64| match boundary {
        SplineBoundary::Free => bspline_basis(xi, &interior),
        SplineBoundary::Natural => natural_basis(xi, &interior),
    };
    let p = basis(0.0).len();
    if ts.len() < p {
        return Err(Error::validation(format!(
            "{} observations for {p} spline coefficients",
            ts.len()
        )));
    }

    let design = DMatrix::from_fn(ts.len(), p, |i, j| basis(x[i])[j]);
    let y = DVector::from_column_slice(ts.values());
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::numerical(format!("spline least squares: {e}")))?;
    let fitted = &design * coef;
    let trend: Vec<f64> = fitted.iter().copied().collect();
    let resid: Vec<f64> = ts.values().iter().zip(&trend).map(|(v, f)| v - f).collect();

    Ok(SplineDetrend {
        residual: ts.with_values(resid)?,
        trend,
        knots,
    })
}

/// Cubic B-spline basis on [0, 1] with the given interior knots.
fn bspline_basis(x: f64, interior: &[f64]) -> Vec<f64> {
    const DEGREE: usize = 3;
    let mut t = vec![0.0; DEGREE + 1];
    t.extend_from_slice(interior);
    t.extend(std::iter::repeat(1.0).take(DEGREE + 1));
    let n = t.len() - DEGREE - 1;

    // degree-zero indicators; the right end belongs to the last non-empty span
    let mut b: Vec<f64> = (0..t.len() - 1)
        .map(|i| {
            let inside = t[i] <= x && x < t[i + 1];
            let right_end = x >= 1.0 && t[i] < t[i + 1] && t[i + 1] >= 1.0;
            f64::from(u8::from(inside || right_end))
        })
        .collect();
    for p in 1..=DEGREE {
        for i in 0..t.len() - p - 1 {
            let left = ratio(x - t[i], t[i + p] - t[i]) * b[i];
            let right = ratio(t[i + p + 1] - x, t[i + p + 1] - t[i + 1]) * b[i + 1];
            b[i] = left + right;
        }
    }
    b.truncate(n);
    b
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Truncated-power natural cubic spline basis with knots {0, interior.., 1}.
fn natural_basis(x: f64, interior: &[f64]) -> Vec<f64> {
    let mut xi = vec![0.0];
    xi.extend_from_slice(interior);
    xi.push(1.0);
    let k = xi.len();
    let cube = |v: f64| v.max(0.0).powi(3);
    let d = |j: usize| (cube(x - xi[j]) - cube(x - xi[k - 1])) / (xi[k - 1] - xi[j]);
    let mut out = vec![1.0, x];
    for j in 0..k - 2 {
        out.push(d(j) - d(k - 2));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monthly(values: Vec<f64>) -> TimeSeries {
        TimeSeries::monthly_from(NaiveDate::from_ymd_opt(2000, 1, 31).unwrap(), values, "s").unwrap()
    }

    fn days(ts: &TimeSeries) -> Vec<f64> {
        let f = ts.dates()[0];
        ts.dates().iter().map(|d| (*d - f).num_days() as f64).collect()
    }

    #[test]
    fn basis_partitions_unity() {
        let interior = [0.2, 0.5, 0.7];
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let s: f64 = bspline_basis(x, &interior).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x={x} sum={s}");
        }
    }

    #[test]
    fn cubic_on_single_segment_is_reproduced() {
        // 25 monthly points: span of exactly 24 months, no interior knot
        let base = monthly(vec![0.0; 25]);
        let x = days(&base);
        let y: Vec<f64> = x
            .iter()
            .map(|t| 3.0 - 0.2 * t + 1e-3 * t * t - 2e-6 * t.powi(3))
            .collect();
        let ts = base.with_values(y.clone()).unwrap();
        let fit = spline_detrend(&ts, 24, SplineBoundary::Free).unwrap();
        assert!(fit.knots.is_empty());
        let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for r in fit.residual.values() {
            assert!(r.abs() < 1e-8 * scale, "{r}");
        }
    }

    #[test]
    fn straight_line_is_reproduced_by_both_bases() {
        let base = monthly(vec![0.0; 120]);
        let y: Vec<f64> = days(&base).iter().map(|t| 5.0 + 0.01 * t).collect();
        let ts = base.with_values(y).unwrap();
        for boundary in [SplineBoundary::Free, SplineBoundary::Natural] {
            let fit = spline_detrend(&ts, 24, boundary).unwrap();
            assert_eq!(fit.knots.len(), 4);
            for r in fit.residual.values() {
                assert!(r.abs() < 1e-8 * 50.0, "{boundary:?} {r}");
            }
        }
    }

    #[test]
    fn too_short_is_an_error() {
        let ts = monthly(vec![1.0; 20]);
        assert!(spline_detrend(&ts, 24, SplineBoundary::Free).is_err());
    }

    #[test]
    fn residual_ss_not_above_centered_ss() {
        let vals: Vec<f64> = (0..200)
            .map(|i| ((i * 37 % 23) as f64).sin() * 10.0 + i as f64)
            .collect();
        let ts = monthly(vals.clone());
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let centered: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
        for boundary in [SplineBoundary::Free, SplineBoundary::Natural] {
            let fit = spline_detrend(&ts, 24, boundary).unwrap();
            let rss: f64 = fit.residual.values().iter().map(|r| r * r).sum();
            assert!(rss <= centered + 1e-9);
        }
    }
}
