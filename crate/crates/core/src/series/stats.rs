use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};

/// Descriptive statistics of a series.
///
/// `sd` uses the n−1 denominator. Skewness is m3/m2^1.5 and excess kurtosis
/// m4/m2² − 3 with population central moments m_k; both are `None` for a
/// constant series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub sd: f64,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

pub fn summary(ts: &TimeSeries) -> Result<SummaryStats> {
    summarize(ts.values())
}

pub(crate) fn summarize(x: &[f64]) -> Result<SummaryStats> {
    let n = x.len();
    if n < 2 {
        return Err(Error::validation("summary statistics need at least 2 observations"));
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let sd = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = min == max;
    Ok(SummaryStats {
        n,
        mean,
        min,
        max,
        sd,
        skewness: (!degenerate).then(|| m3 / m2.powf(1.5)),
        excess_kurtosis: (!degenerate).then(|| m4 / (m2 * m2) - 3.0),
    })
}

/// Unbiased sample variance over each window of `window` consecutive
/// observations, dated at the window start.
pub fn rolling_variance(ts: &TimeSeries, window: usize) -> Result<TimeSeries> {
    if window < 2 {
        return Err(Error::validation("rolling window must be at least 2"));
    }
    if window > ts.len() {
        return Err(Error::validation(format!(
            "rolling window {window} exceeds series length {}",
            ts.len()
        )));
    }
    let values: Vec<f64> = ts
        .values()
        .windows(window)
        .map(|w| {
            let mean = w.iter().sum::<f64>() / window as f64;
            w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (window - 1) as f64
        })
        .collect();
    let dates = ts.dates()[..values.len()].to_vec();
    TimeSeries::new(dates, values, format!("{}_rollvar{window}", ts.label()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::monthly_from(NaiveDate::from_ymd_opt(2010, 1, 31).unwrap(), values, "x").unwrap()
    }

    #[test]
    fn rolling_variance_hand_value() {
        let rv = rolling_variance(&series(vec![1.0, 2.0, 3.0, 4.0, 5.0]), 5).unwrap();
        assert_eq!(rv.values(), &[2.5]);
    }

    #[test]
    fn rolling_variance_constant_and_lengths() {
        let rv = rolling_variance(&series(vec![3.0; 12]), 5).unwrap();
        assert_eq!(rv.len(), 8);
        assert!(rv.values().iter().all(|v| *v == 0.0));
        assert!(rolling_variance(&series(vec![1.0; 4]), 5).is_err());
        assert!(rolling_variance(&series(vec![1.0; 4]), 1).is_err());
    }

    #[test]
    fn rolling_variance_full_window_is_sample_variance() {
        let x = vec![1.0, 4.0, -2.0, 8.0, 0.5, 3.0];
        let rv = rolling_variance(&series(x.clone()), x.len()).unwrap();
        let s = summarize(&x).unwrap();
        assert!((rv.values()[0] - s.sd * s.sd).abs() < 1e-12);
    }

    #[test]
    fn constant_series_has_no_shape_moments() {
        let s = summary(&series(vec![2.0; 10])).unwrap();
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.skewness, None);
        assert_eq!(s.excess_kurtosis, None);
        assert!(summary(&series(vec![1.0])).is_err());
    }

    #[test]
    fn normal_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = summarize(&x).unwrap();
        assert!(s.skewness.unwrap().abs() < 0.01);
        assert!(s.excess_kurtosis.unwrap().abs() < 0.02);
        assert!(s.min <= s.mean && s.mean <= s.max);
    }
}
