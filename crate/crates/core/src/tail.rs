//! Tail-process laws of MAR(r, s) models with r, s ≤ 1.
//!
//! Conditional on a large |y_t|, the peak of the explosive episode sits at
//! t − N where
//!
//! ```text
//! P[N = h] = |c_h|^α / Σ_k |c_k|^α
//! ```
//!
//! and c_h are the moving-average weights. With a = |φ|^α and b = |ψ|^α this
//! is a two-sided geometric law: b^{−h}/D for h ≤ 0 and a^h/D for h ≥ 0,
//! D = 1/(1−a) + 1/(1−b) − 1.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stream_rng, MarModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailLaw {
    pub phi: f64,
    pub psi: f64,
    pub alpha: f64,
    a: f64,
    b: f64,
    d: f64,
}

impl TailLaw {
    pub fn new(model: &MarModel, alpha: f64) -> Result<Self> {
        let m = model.validate()?;
        if m.ar2.is_some() {
            return Err(Error::Unsupported("tail law of AR(2) processes".into()));
        }
        Self::from_coefficients(m.phi, m.psi, alpha)
    }

    /// Law for coefficients (φ, ψ); φ = 0 gives MAR(0,1), ψ = 0 gives MAR(1,0).
    pub fn from_coefficients(phi: f64, psi: f64, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::validation(format!("tail index must be positive, got {alpha}")));
        }
        for (name, v) in [("phi", phi), ("psi", psi)] {
            if !(v.is_finite() && v.abs() < 1.0) {
                return Err(Error::Stationarity(format!("|{name}| = {} must be below 1", v.abs())));
            }
        }
        let a = abs_pow(phi, alpha);
        let b = abs_pow(psi, alpha);
        Ok(Self {
            phi,
            psi,
            alpha,
            a,
            b,
            d: 1.0 / (1.0 - a) + 1.0 / (1.0 - b) - 1.0,
        })
    }

    /// D = Σ_h |c_h|^α up to the common factor |1 − φψ|^{−α}.
    pub fn normalizer(&self) -> f64 {
        self.d
    }

    pub fn pmf(&self, h: i64) -> f64 {
        if h <= 0 {
            geo(self.b, -h) / self.d
        } else {
            geo(self.a, h) / self.d
        }
    }

    /// P[N ≤ h].
    pub fn cdf(&self, h: i64) -> f64 {
        if h <= 0 {
            geo(self.b, -h) / ((1.0 - self.b) * self.d)
        } else {
            1.0 - self.survival(h)
        }
    }

    /// P[N > h].
    pub fn survival(&self, h: i64) -> f64 {
        if h >= 0 {
            geo(self.a, h + 1) / ((1.0 - self.a) * self.d)
        } else {
            1.0 - self.cdf(h)
        }
    }

    /// P[N < 0].
    pub fn prob_negative(&self) -> f64 {
        self.cdf(-1)
    }

    /// E(N) = [a/(1−a)² − b/(1−b)²] / D.
    pub fn expected(&self) -> f64 {
        let (a, b) = (self.a, self.b);
        (a / (1.0 - a).powi(2) - b / (1.0 - b).powi(2)) / self.d
    }

    /// E(N | N < 0) = −1/(1 − b); N given N < 0 is geometric whatever φ is.
    pub fn expected_given_negative(&self) -> f64 {
        -1.0 / (1.0 - self.b)
    }

    /// Smallest h with P[N ≤ h] ≥ 1/2.
    pub fn median(&self) -> i64 {
        self.quantile(0.5)
    }

    /// Smallest h with P[N ≤ h] ≥ p.
    pub fn quantile(&self, p: f64) -> i64 {
        if self.cdf(0) >= p {
            // cdf(h) = b^{−h}/((1−b)D) on h ≤ 0
            let mut h = if self.b > 0.0 {
                let x = (p * (1.0 - self.b) * self.d).ln() / self.b.ln();
                -(x.floor() as i64)
            } else {
                0
            };
            h = h.min(0);
            while h < 0 && self.cdf(h) < p {
                h += 1;
            }
            while self.cdf(h - 1) >= p {
                h -= 1;
            }
            h
        } else {
            let mut h = 1;
            if self.a > 0.0 {
                let x = ((1.0 - p) * (1.0 - self.a) * self.d).ln() / self.a.ln();
                h = (x.floor() as i64 - 1).max(1);
            }
            while self.cdf(h) < p {
                h += 1;
            }
            while h > 1 && self.cdf(h - 1) >= p {
                h -= 1;
            }
            h
        }
    }

    /// The most likely offset, always 0.
    pub fn mode(&self) -> i64 {
        0
    }

    /// Integer interval [lo, hi] with each tail carrying at most γ/2.
    ///
    /// For a purely noncausal law the continuous quantiles
    /// log(γ/2)/(α log(1/ψ)) and log(1−γ/2)/(α log(1/ψ)) are rounded outward;
    /// otherwise the discrete law is inverted on each side.
    pub fn prediction_interval(&self, gamma: f64) -> Result<(i64, i64)> {
        if !(gamma > 0.0 && gamma < 0.5) {
            return Err(Error::validation(format!("level must lie in (0, 0.5), got {gamma}")));
        }
        if self.a == 0.0 && self.b > 0.0 {
            let scale = self.alpha * (1.0 / self.psi.abs()).ln();
            let lo = ((gamma / 2.0).ln() / scale).floor() as i64;
            let hi = ((1.0 - gamma / 2.0).ln() / scale).ceil() as i64;
            return Ok((lo, hi.min(0)));
        }
        // lo: largest h with P[N < h] ≤ γ/2
        let mut lo = self.quantile(gamma / 2.0);
        if self.cdf(lo - 1) > gamma / 2.0 {
            lo -= 1;
        }
        while self.cdf(lo) <= gamma / 2.0 {
            lo += 1;
        }
        // hi: smallest h with P[N > h] ≤ γ/2
        let mut hi = self.quantile(1.0 - gamma / 2.0);
        while self.survival(hi) > gamma / 2.0 {
            hi += 1;
        }
        while self.survival(hi - 1) <= gamma / 2.0 {
            hi -= 1;
        }
        Ok((lo, hi))
    }

    /// Truncation |h| ≤ H* where both geometric pmf tails, which decay like
    /// |φ|^{αh} and |ψ|^{αh}, are below 1e−12.
    pub fn truncation_depth(&self) -> i64 {
        let rate = self.a.max(self.b);
        if rate == 0.0 {
            return 1;
        }
        ((1e-12f64).ln() / rate.ln()).ceil() as i64
    }

    /// Unnormalized moving-average weight with 0^0 = 1.
    fn c(&self, h: i64) -> f64 {
        if h >= 0 {
            signed_pow(self.phi, h)
        } else {
            signed_pow(self.psi, -h)
        }
    }

    /// Draws N from the two-geometric mixture.
    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let p_nonneg = (1.0 / (1.0 - self.a)) / self.d;
        let nonneg = Bernoulli::new(p_nonneg.clamp(0.0, 1.0))
            .map(|d| d.sample(rng))
            .unwrap_or(true);
        if nonneg {
            geometric(1.0 - self.a, rng)
        } else {
            -1 - geometric(1.0 - self.b, rng)
        }
    }

    /// Spectral tail path X_h = c_{h+N}/c_N for h in [−H, H], with X_0 = 1.
    pub fn tail_path_given(&self, n: i64, horizon: i64) -> TailPath {
        let cn = self.c(n);
        TailPath {
            n,
            horizon,
            x: (-horizon..=horizon).map(|h| self.c(h + n) / cn).collect(),
        }
    }

    /// Four-region closed form of X_h given N (same values as
    /// [`TailLaw::tail_path_given`]).
    pub fn tail_value_closed_form(&self, h: i64, n: i64) -> f64 {
        let (phi, psi) = (self.phi, self.psi);
        if n > (-h).max(0) {
            signed_pow(phi, h)
        } else if 0 < n && n <= -h {
            signed_pow(psi, -h - n) / signed_pow(phi, n)
        } else if -h < n && n <= 0 {
            signed_pow(phi, h + n) * signed_pow(psi, n)
        } else {
            signed_pow(psi, -h)
        }
    }
}

fn abs_pow(x: f64, alpha: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(alpha)
    }
}

/// r^k with 0^0 = 1.
fn geo(r: f64, k: i64) -> f64 {
    if k == 0 {
        1.0
    } else {
        r.powi(k as i32)
    }
}

/// x^k for any integer k with 0^0 = 1.
fn signed_pow(x: f64, k: i64) -> f64 {
    if k == 0 {
        1.0
    } else {
        x.powi(k as i32)
    }
}

/// Failures before the first success with success probability p.
fn geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> i64 {
    if p >= 1.0 {
        return 0;
    }
    Geometric::new(p).map(|g| g.sample(rng) as i64).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPath {
    pub n: i64,
    pub horizon: i64,
    /// X_h for h = −horizon..=horizon.
    pub x: Vec<f64>,
}

impl TailPath {
    pub fn at(&self, h: i64) -> f64 {
        self.x[(h + self.horizon) as usize]
    }
}

/// Draws N and the spectral tail path on [−H, H].
pub fn sample_tail_path(model: &MarModel, alpha: f64, horizon: i64, seed: u64) -> Result<TailPath> {
    if horizon < 1 {
        return Err(Error::validation("horizon must be at least 1"));
    }
    let law = TailLaw::new(model, alpha)?;
    let mut rng = stream_rng(seed, 0);
    let n = law.sample_n(&mut rng);
    Ok(law.tail_path_given(n, horizon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    pub alpha: f64,
    pub stderr: f64,
    pub k: usize,
}

/// floor(0.1 n) clipped to [10, n − 1].
pub fn default_hill_k(n: usize) -> usize {
    (n / 10).max(10).min(n.saturating_sub(1))
}

/// Hill estimator on |values| using the k largest order statistics.
pub fn hill_estimate(values: &[f64], k: usize) -> Result<HillEstimate> {
    let n = values.len();
    if k < 2 {
        return Err(Error::validation("Hill estimator needs k ≥ 2"));
    }
    if k >= n {
        return Err(Error::validation(format!("k = {k} must be below the sample size {n}")));
    }
    let mut z: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite value"));
    }
    z.sort_by(|a, b| a.total_cmp(b));
    let threshold = z[n - 1 - k];
    if !(threshold > 0.0) {
        return Err(Error::validation("fewer than k + 1 positive values"));
    }
    let sum: f64 = z[n - k..].iter().map(|v| (v / threshold).ln()).sum();
    if !(sum > 0.0) {
        return Err(Error::numerical("tied order statistics give a zero Hill denominator"));
    }
    let alpha = k as f64 / sum;
    Ok(HillEstimate {
        alpha,
        stderr: alpha / (k as f64).sqrt(),
        k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub gamma: f64,
    pub lo: i64,
    pub hi: i64,
}

/// Summary of the time-to-peak law.
///
/// `exceed_probs[m]` is P[N ≤ −m], the chance that the peak lies at least m
/// periods ahead; `exceed_probs_given_neg[m]` is the same given N < 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationReport {
    pub phi: f64,
    pub psi: f64,
    pub alpha: f64,
    #[serde(rename = "E_N")]
    pub e_n: f64,
    #[serde(rename = "E_N_given_neg")]
    pub e_n_given_neg: f64,
    pub median: i64,
    pub mode: i64,
    pub interval: IntervalReport,
    pub exceed_probs: BTreeMap<u32, f64>,
    pub exceed_probs_given_neg: BTreeMap<u32, f64>,
}

pub fn time_to_peak_report(model: &MarModel, alpha: f64, horizons: &[u32], gamma: f64) -> Result<DurationReport> {
    let law = TailLaw::new(model, alpha)?;
    let (lo, hi) = law.prediction_interval(gamma)?;
    let p_neg = law.prob_negative();
    let exceed: BTreeMap<u32, f64> = horizons.iter().map(|&m| (m, law.cdf(-(m as i64)))).collect();
    let given: BTreeMap<u32, f64> = horizons
        .iter()
        .map(|&m| {
            let p = if m == 0 { 1.0 } else { law.cdf(-(m as i64)) / p_neg };
            (m, if p_neg > 0.0 { p } else { 0.0 })
        })
        .collect();
    Ok(DurationReport {
        phi: law.phi,
        psi: law.psi,
        alpha,
        e_n: law.expected(),
        e_n_given_neg: law.expected_given_negative(),
        median: law.median(),
        mode: law.mode(),
        interval: IntervalReport { gamma, lo, hi },
        exceed_probs: exceed,
        exceed_probs_given_neg: given,
    })
}
