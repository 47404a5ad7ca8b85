//! MAR(r, s) processes with r, s ≤ 1 and pure AR(2) processes with real
//! distinct roots.
//!
//! The mixed process is
//!
//! ```text
//! (1 - φL)(1 - ψL⁻¹) y_t = ε_t
//! ```
//!
//! with causal component `u_t = y_t - φ y_{t-1}` and noncausal component
//! `v_t = y_t - ψ y_{t+1}`.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Cauchy, Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub const DEFAULT_BURN: usize = 200;

/// Seeded generator for stream `stream` (a replication index, say).
///
/// Different streams of the same seed are independent, so replication `i`
/// always sees the same draws regardless of how work is scheduled.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Error law of ε_t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorDist {
    StudentT { df: f64 },
    Cauchy { scale: f64 },
}

impl ErrorDist {
    /// Pareto tail exponent: ν for Student-t, 1 for Cauchy.
    pub fn tail_index(&self) -> f64 {
        match self {
            ErrorDist::StudentT { df } => *df,
            ErrorDist::Cauchy { .. } => 1.0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ErrorDist::StudentT { .. } => "student_t",
            ErrorDist::Cauchy { .. } => "cauchy",
        }
    }

    pub fn param(&self) -> f64 {
        match self {
            ErrorDist::StudentT { df } => *df,
            ErrorDist::Cauchy { scale } => *scale,
        }
    }

    pub fn from_kind(kind: &str, param: f64) -> Result<Self> {
        let d = match kind {
            "student_t" | "t" => ErrorDist::StudentT { df: param },
            "cauchy" => ErrorDist::Cauchy { scale: param },
            other => return Err(Error::validation(format!("unknown distribution kind `{other}`"))),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ErrorDist::StudentT { df } if !(df.is_finite() && *df > 0.0) => Err(Error::validation(format!(
                "Student-t degrees of freedom must be positive, got {df}"
            ))),
            ErrorDist::Cauchy { scale } if !(scale.is_finite() && *scale > 0.0) => {
                Err(Error::validation(format!("Cauchy scale must be positive, got {scale}")))
            }
            _ => Ok(()),
        }
    }

    /// Draws `n` variates.
    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match *self {
            ErrorDist::StudentT { df } => {
                let d = StudentT::new(df).map_err(|e| Error::validation(e.to_string()))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            ErrorDist::Cauchy { scale } => {
                let d = Cauchy::new(0.0, scale).map_err(|e| Error::validation(e.to_string()))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
        })
    }
}

impl fmt::Display for ErrorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorDist::StudentT { df } => write!(f, "t({df})"),
            ErrorDist::Cauchy { scale } if *scale == 1.0 => write!(f, "cauchy"),
            ErrorDist::Cauchy { scale } => write!(f, "cauchy:{scale}"),
        }
    }
}

/// Accepts `t3`, `t(3)`, `student_t:3`, `cauchy` and `cauchy:2`.
impl FromStr for ErrorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::validation(format!("cannot parse distribution `{s}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let d = if s == "cauchy" {
            ErrorDist::Cauchy { scale: 1.0 }
        } else if let Some(rest) = s.strip_prefix("cauchy:") {
            ErrorDist::Cauchy { scale: num(rest)? }
        } else if let Some(rest) = s.strip_prefix("student_t:") {
            ErrorDist::StudentT { df: num(rest)? }
        } else if let Some(rest) = s.strip_prefix("t(").and_then(|r| r.strip_suffix(')')) {
            ErrorDist::StudentT { df: num(rest)? }
        } else if let Some(rest) = s.strip_prefix('t') {
            ErrorDist::StudentT { df: num(rest)? }
        } else {
            return Err(bad());
        };
        d.validate()?;
        Ok(d)
    }
}

/// Root reciprocals of a pure AR(2) lag polynomial (1 − λ1 L)(1 − λ2 L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar2Roots {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Ar2Roots {
    /// Both |λ| < 1.
    pub fn is_causal(&self) -> bool {
        self.lambda1.abs() < 1.0
    }

    /// Coefficients (t1, t2) of y_t = t1 y_{t-1} + t2 y_{t-2} + ε_t.
    pub fn ar_coefficients(&self) -> (f64, f64) {
        (self.lambda1 + self.lambda2, -self.lambda1 * self.lambda2)
    }
}

/// A MAR(r, s) model, or a pure AR(2) model when `ar2` is set.
///
/// Coefficients of absent orders are zero. For the AR(2) variant `r`, `s`,
/// `phi` and `psi` must all be zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarModel {
    pub r: u8,
    pub s: u8,
    pub phi: f64,
    pub psi: f64,
    pub dist: ErrorDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar2: Option<Ar2Roots>,
}

impl MarModel {
    pub fn mar11(phi: f64, psi: f64, dist: ErrorDist) -> Self {
        Self {
            r: 1,
            s: 1,
            phi,
            psi,
            dist,
            ar2: None,
        }
    }

    pub fn mar01(psi: f64, dist: ErrorDist) -> Self {
        Self {
            r: 0,
            s: 1,
            phi: 0.0,
            psi,
            dist,
            ar2: None,
        }
    }

    pub fn mar10(phi: f64, dist: ErrorDist) -> Self {
        Self {
            r: 1,
            s: 0,
            phi,
            psi: 0.0,
            dist,
            ar2: None,
        }
    }

    pub fn white_noise(dist: ErrorDist) -> Self {
        Self {
            r: 0,
            s: 0,
            phi: 0.0,
            psi: 0.0,
            dist,
            ar2: None,
        }
    }

    pub fn ar2(lambda1: f64, lambda2: f64, dist: ErrorDist) -> Self {
        Self {
            r: 0,
            s: 0,
            phi: 0.0,
            psi: 0.0,
            dist,
            ar2: Some(Ar2Roots { lambda1, lambda2 }),
        }
    }

    pub fn tail_index(&self) -> f64 {
        self.dist.tail_index()
    }

    /// Returns the model if it describes a strictly stationary process
    /// this crate supports.
    pub fn validate(self) -> Result<Self> {
        self.dist.validate()?;
        if let Some(roots) = self.ar2 {
            if self.r != 0 || self.s != 0 || self.phi != 0.0 || self.psi != 0.0 {
                return Err(Error::validation(
                    "AR(2) variant requires r = s = 0 and no MAR coefficients",
                ));
            }
            let (a, b) = (roots.lambda1, roots.lambda2);
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::validation("AR(2) roots must be finite"));
            }
            if a == b {
                return Err(Error::Unsupported("AR(2) with a double root".into()));
            }
            if a.abs() == 1.0 || b.abs() == 1.0 {
                return Err(Error::Stationarity("AR(2) root on the unit circle".into()));
            }
            if (a.abs() < 1.0) != (b.abs() < 1.0) {
                return Err(Error::Unsupported(
                    "AR(2) with one root inside and one outside the unit circle; use MAR(1,1)".into(),
                ));
            }
            return Ok(self);
        }
        if self.r > 1 || self.s > 1 {
            return Err(Error::Unsupported(format!("MAR({},{}) orders above 1", self.r, self.s)));
        }
        for (order, value, name) in [(self.r, self.phi, "phi"), (self.s, self.psi, "psi")] {
            if !value.is_finite() {
                return Err(Error::validation(format!("{name} is not finite")));
            }
            if order == 0 && value != 0.0 {
                return Err(Error::validation(format!("{name} = {value} given for a zero order")));
            }
            if value.abs() >= 1.0 {
                return Err(Error::Stationarity(format!(
                    "|{name}| = {} must be below 1",
                    value.abs()
                )));
            }
        }
        Ok(self)
    }

    /// Largest root reciprocal modulus governing geometric decay of the
    /// moving-average weights.
    fn decay_rate(&self) -> f64 {
        match self.ar2 {
            Some(r) if r.is_causal() => r.lambda1.abs().max(r.lambda2.abs()),
            Some(r) => (1.0 / r.lambda1.abs()).max(1.0 / r.lambda2.abs()),
            None => self.phi.abs().max(self.psi.abs()),
        }
    }

    /// Smallest H ≥ 1 with rate^H < 1e-12.
    pub fn truncation_depth(&self) -> usize {
        let rate = self.decay_rate();
        if rate == 0.0 {
            return 1;
        }
        let mut h = ((1e-12f64).ln() / rate.ln()).floor().max(1.0) as usize;
        while rate.powi(h as i32) >= 1e-12 {
            h += 1;
        }
        h
    }

    /// Moving-average weights c_h for h in `h_min..=h_max`, so that
    /// y_t = Σ_h c_h ε_{t-h}.
    pub fn ma_coefficients(&self, h_min: i64, h_max: i64) -> Result<Vec<f64>> {
        let m = self.validate()?;
        if h_min > h_max {
            return Err(Error::validation(format!("h_min {h_min} exceeds h_max {h_max}")));
        }
        Ok((h_min..=h_max).map(|h| m.ma_coefficient(h)).collect())
    }

    /// Single weight c_h; the model is assumed valid.
    pub(crate) fn ma_coefficient(&self, h: i64) -> f64 {
        if let Some(roots) = self.ar2 {
            let (l1, l2) = (roots.lambda1, roots.lambda2);
            return if roots.is_causal() {
                if h < 0 {
                    0.0
                } else {
                    (pow(l1, h + 1) - pow(l2, h + 1)) / (l1 - l2)
                }
            } else if h >= 0 {
                0.0
            } else {
                (pow(l2, h + 1) - pow(l1, h + 1)) / (l1 - l2)
            };
        }
        let scale = 1.0 / (1.0 - self.phi * self.psi);
        if h >= 0 {
            pow(self.phi, h) * scale
        } else {
            pow(self.psi, -h) * scale
        }
    }

    /// Coefficients of the pseudo-causal autoregression
    /// y_t = φ_1 y_{t-1} + … + φ_p y_{t-p} + e_t.
    ///
    /// A noncausal factor 1 − ψL⁻¹ is replaced by 1 − L/ψ, so e_t is a
    /// lagged, rescaled ε and not an innovation.
    pub fn ar_representation(&self) -> Result<Vec<f64>> {
        let m = self.validate()?;
        if let Some(roots) = m.ar2 {
            let (t1, t2) = roots.ar_coefficients();
            return Ok(vec![t1, t2]);
        }
        if m.s == 1 && m.psi == 0.0 {
            return Err(Error::validation(
                "psi = 0 with a noncausal order has no pseudo-causal form",
            ));
        }
        Ok(match (m.r, m.s) {
            (0, 0) => vec![],
            (1, 0) => vec![m.phi],
            (0, 1) => vec![1.0 / m.psi],
            _ => vec![m.phi + 1.0 / m.psi, -m.phi / m.psi],
        })
    }
}

/// 0^0 = 1 and negative exponents allowed.
fn pow(x: f64, h: i64) -> f64 {
    if h == 0 {
        1.0
    } else {
        x.powi(h as i32)
    }
}

/// A simulated path together with the errors that generated it.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub y: Vec<f64>,
    /// ε aligned with `y`: `eps[i]` is the error entering at time `i`.
    pub eps: Vec<f64>,
}

/// Simulates `t_len` observations from the strictly stationary solution.
///
/// Draws `t_len + 2·burn` errors, runs the causal filter forward from zero,
/// then the noncausal filter backward from a zero terminal value, and drops
/// `burn` observations at each end.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &MarModel,
    t_len: usize,
    burn: usize,
    rng: &mut R,
) -> Result<SimulatedPath> {
    let m = model.validate()?;
    if t_len == 0 {
        return Err(Error::validation("simulation length must be positive"));
    }
    let n = t_len + 2 * burn;
    let eps = m.dist.sample_n(rng, n)?;
    let y = filter(&m, &eps);
    Ok(SimulatedPath {
        y: y[burn..burn + t_len].to_vec(),
        eps: eps[burn..burn + t_len].to_vec(),
    })
}

/// Applies the inverse lag polynomial to `eps` with zero initial/terminal values.
pub(crate) fn filter(m: &MarModel, eps: &[f64]) -> Vec<f64> {
    let n = eps.len();
    let mut y = vec![0.0; n];
    if let Some(roots) = m.ar2 {
        let (t1, t2) = roots.ar_coefficients();
        if roots.is_causal() {
            for t in 0..n {
                let l1 = if t >= 1 { y[t - 1] } else { 0.0 };
                let l2 = if t >= 2 { y[t - 2] } else { 0.0 };
                y[t] = t1 * l1 + t2 * l2 + eps[t];
            }
        } else {
            // y_{t} = (y_{t+2} - t1 y_{t+1} - ε_{t+2}) / t2
            for t in (0..n).rev() {
                let f1 = if t + 1 < n { y[t + 1] } else { 0.0 };
                let f2 = if t + 2 < n { y[t + 2] } else { 0.0 };
                let e2 = if t + 2 < n { eps[t + 2] } else { 0.0 };
                y[t] = (f2 - t1 * f1 - e2) / t2;
            }
        }
        return y;
    }
    let mut v = 0.0;
    let mut vs = vec![0.0; n];
    for t in 0..n {
        v = m.phi * v + eps[t];
        vs[t] = v;
    }
    let mut next = 0.0;
    for t in (0..n).rev() {
        next = vs[t] + m.psi * next;
        y[t] = next;
    }
    y
}

/// Origin date for simulated series: observation 1 is dated 2000-01-31 and
/// later observations at consecutive month ends.
pub fn simulation_origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 31).expect("valid date")
}

/// Simulated series of length `t_len`, reproducible from `seed`.
pub fn simulate(model: &MarModel, t_len: usize, seed: u64, burn: usize) -> Result<TimeSeries> {
    let path = simulate_path(model, t_len, burn, &mut stream_rng(seed, 0))?;
    TimeSeries::monthly_from(simulation_origin(), path.y, "simulated")
}

/// Causal and noncausal components of an observed path.
///
/// With zero-based positions, `u[k]` is u at position `k + 1` and `v[k]` is
/// v at position `k`; both have length `n − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentComponents {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl LatentComponents {
    /// u_t = y_t − φ y_{t−1}, defined for t ≥ 1.
    pub fn u_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|k| self.u.get(k).copied())
    }

    /// v_t = y_t − ψ y_{t+1}, defined for t ≤ n − 2.
    pub fn v_at(&self, t: usize) -> Option<f64> {
        self.v.get(t).copied()
    }
}

pub fn latent_components(y: &[f64], phi: f64, psi: f64) -> Result<LatentComponents> {
    if y.len() < 3 {
        return Err(Error::validation("latent components need at least 3 observations"));
    }
    if (1.0 - phi * psi).abs() < 1e-12 {
        return Err(Error::validation("phi·psi = 1 makes the reconstruction degenerate"));
    }
    Ok(LatentComponents {
        u: y.windows(2).map(|w| w[1] - phi * w[0]).collect(),
        v: y.windows(2).map(|w| w[0] - psi * w[1]).collect(),
    })
}

/// Key-value text form of a model with its seed and burn-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDescriptor {
    pub model: MarModel,
    pub seed: u64,
    pub burn: usize,
}

impl ModelDescriptor {
    pub fn to_text(&self) -> String {
        let m = &self.model;
        format!(
            "r = {}\ns = {}\nphi = {}\npsi = {}\ndist.kind = {}\ndist.param = {}\nseed = {}\nburn = {}\n",
            m.r,
            m.s,
            m.phi,
            m.psi,
            m.dist.kind(),
            m.dist.param(),
            self.seed,
            self.burn
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got `{line}`"),
            })?;
            fields.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        fn get<T: FromStr>(fields: &std::collections::BTreeMap<String, (usize, String)>, key: &str) -> Result<T> {
            let (line, raw) = fields
                .get(key)
                .ok_or_else(|| Error::validation(format!("missing key `{key}`")))?;
            raw.parse().map_err(|_| Error::Parse {
                line: *line,
                message: format!("bad value `{raw}` for `{key}`"),
            })
        }
        let kind: String = get(&fields, "dist.kind")?;
        let model = MarModel {
            r: get(&fields, "r")?,
            s: get(&fields, "s")?,
            phi: get(&fields, "phi")?,
            psi: get(&fields, "psi")?,
            dist: ErrorDist::from_kind(&kind, get(&fields, "dist.param")?)?,
            ar2: None,
        };
        Ok(Self {
            model: model.validate()?,
            seed: get(&fields, "seed")?,
            burn: get(&fields, "burn")?,
        })
    }
}
