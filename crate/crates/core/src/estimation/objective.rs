//! Residuals, nonlinear transformations and the GCov trace objective.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family of nonlinear transformations a_j(ε).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// ε^p for integer p (sign kept), |ε|^p otherwise.
    Powers,
    /// (log|ε|)^p with the same integer/fractional rule.
    LogAbsPowers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub exponents: Vec<f64>,
}

impl TransformSpec {
    pub fn powers(exponents: &[f64]) -> Self {
        Self {
            kind: TransformKind::Powers,
            exponents: exponents.to_vec(),
        }
    }

    pub fn log_abs_powers(exponents: &[f64]) -> Self {
        Self {
            kind: TransformKind::LogAbsPowers,
            exponents: exponents.to_vec(),
        }
    }

    /// Integer powers ε, ε², …, ε^k.
    pub fn integer_powers(k: usize) -> Self {
        Self::powers(&(1..=k).map(|j| j as f64).collect::<Vec<_>>())
    }

    /// Fractional powers {0.5, 1, 1.5, 2}, all with finite variance under
    /// t(ν > 4) errors.
    pub fn fractional_k4() -> Self {
        Self::powers(&[0.5, 1.0, 1.5, 2.0])
    }

    pub fn k(&self) -> usize {
        self.exponents.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() < 2 {
            return Err(Error::validation("at least two transformations are needed"));
        }
        for (i, p) in self.exponents.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::validation(format!("exponent {p} must be positive")));
            }
            if self.exponents[..i].contains(p) {
                return Err(Error::validation(format!("exponent {p} repeated")));
            }
        }
        Ok(())
    }

    /// Compact label such as `powers(1,2)`.
    pub fn label(&self) -> String {
        let name = match self.kind {
            TransformKind::Powers => "powers",
            TransformKind::LogAbsPowers => "log_abs_powers",
        };
        let exps: Vec<String> = self.exponents.iter().map(|p| p.to_string()).collect();
        format!("{name}({})", exps.join(","))
    }

    fn apply_into(&self, e: f64, out: &mut [f64]) {
        let base = match self.kind {
            TransformKind::Powers => e,
            TransformKind::LogAbsPowers => e.abs().max(f64::MIN_POSITIVE).ln(),
        };
        for (o, p) in out.iter_mut().zip(&self.exponents) {
            *o = power(base, *p);
        }
    }
}

fn power(x: f64, p: f64) -> f64 {
    if p == p.trunc() && p.abs() < 64.0 {
        x.powi(p as i32)
    } else if p == 0.5 {
        x.abs().sqrt()
    } else if p == 1.5 {
        let a = x.abs();
        a * a.sqrt()
    } else {
        x.abs().powf(p)
    }
}

/// Which orders are estimated; θ is laid out as (φ, ψ) with absent entries dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub r: u8,
    pub s: u8,
}

impl Order {
    pub const MAR11: Order = Order { r: 1, s: 1 };
    pub const MAR01: Order = Order { r: 0, s: 1 };
    pub const MAR10: Order = Order { r: 1, s: 0 };

    pub fn new(r: u8, s: u8) -> Result<Self> {
        match (r, s) {
            (1, 0) | (0, 1) | (1, 1) => Ok(Self { r, s }),
            _ => Err(Error::Unsupported(format!("estimation of MAR({r},{s})"))),
        }
    }

    pub fn dim(&self) -> usize {
        (self.r + self.s) as usize
    }

    /// (φ, ψ) from θ.
    pub fn split(&self, theta: &[f64]) -> (f64, f64) {
        match (self.r, self.s) {
            (1, 1) => (theta[0], theta[1]),
            (1, 0) => (theta[0], 0.0),
            (0, 1) => (0.0, theta[0]),
            _ => (0.0, 0.0),
        }
    }
}

/// ε̂_t = (1 − φL)(1 − ψL⁻¹) y_t for t = r, …, n − 1 − s (zero-based).
pub fn residuals(y: &[f64], order: Order, theta: &[f64]) -> Vec<f64> {
    let (phi, psi) = order.split(theta);
    residuals_phi_psi(y, order, phi, psi)
}

pub(crate) fn residuals_phi_psi(y: &[f64], order: Order, phi: f64, psi: f64) -> Vec<f64> {
    let (r, s) = (order.r as usize, order.s as usize);
    if y.len() < r + s + 1 {
        return Vec::new();
    }
    (r..y.len() - s)
        .map(|t| {
            let v_t = y[t] - if s == 1 { psi * y[t + 1] } else { 0.0 };
            let v_prev = if r == 1 {
                y[t - 1] - if s == 1 { psi * y[t] } else { 0.0 }
            } else {
                0.0
            };
            v_t - phi * v_prev
        })
        .collect()
}

/// Weighting matrix used in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Γ̂(0)⁻¹.
    #[default]
    Full,
    /// diag(Γ̂(0))⁻¹, usable when Γ̂(0) is singular.
    Diagonal,
}

/// Demeaned transformed residuals, row-major n × K.
pub(crate) fn transformed(resid: &[f64], tf: &TransformSpec) -> Vec<f64> {
    let k = tf.k();
    let n = resid.len();
    let mut a = vec![0.0; n * k];
    for (t, e) in resid.iter().enumerate() {
        tf.apply_into(*e, &mut a[t * k..(t + 1) * k]);
    }
    for j in 0..k {
        let mean = (0..n).map(|t| a[t * k + j]).sum::<f64>() / n as f64;
        for t in 0..n {
            a[t * k + j] -= mean;
        }
    }
    a
}

/// Γ̂(h) = (1/n) Σ_{t≥h} a_t a_{t−h}' for h = 0..=H.
pub(crate) fn autocovariances(a: &[f64], k: usize, h_max: usize) -> Vec<DMatrix<f64>> {
    let n = a.len() / k;
    (0..=h_max)
        .map(|h| {
            let mut g = DMatrix::zeros(k, k);
            for t in h..n {
                let at = &a[t * k..(t + 1) * k];
                let ah = &a[(t - h) * k..(t - h + 1) * k];
                for i in 0..k {
                    for j in 0..k {
                        g[(i, j)] += at[i] * ah[j];
                    }
                }
            }
            g / n as f64
        })
        .collect()
}

/// Weight matrix W with L = Σ_h Tr[Γ(h) W Γ(h)' W].
pub(crate) fn weight_matrix(gamma0: &DMatrix<f64>, weighting: Weighting) -> Result<DMatrix<f64>> {
    let k = gamma0.nrows();
    if let Some(j) = (0..k).find(|&j| !(gamma0[(j, j)] > 0.0)) {
        return Err(Error::SingularCovariance { first: j, second: j });
    }
    match weighting {
        Weighting::Diagonal => Ok(DMatrix::from_fn(
            k,
            k,
            |i, j| {
                if i == j {
                    1.0 / gamma0[(i, i)]
                } else {
                    0.0
                }
            },
        )),
        Weighting::Full => {
            // work on the correlation matrix so the singularity test is scale free
            let sd: Vec<f64> = (0..k).map(|i| gamma0[(i, i)].sqrt()).collect();
            let corr = DMatrix::from_fn(k, k, |i, j| gamma0[(i, j)] / (sd[i] * sd[j]));
            let rcond_ok = corr
                .clone()
                .cholesky()
                .map(|c| {
                    let l = c.l();
                    (0..k).all(|i| l[(i, i)] * l[(i, i)] > 1e-10)
                })
                .unwrap_or(false);
            if !rcond_ok {
                let (first, second) = most_collinear(&corr);
                return Err(Error::SingularCovariance { first, second });
            }
            let inv = corr
                .try_inverse()
                .ok_or(Error::SingularCovariance { first: 0, second: 1 })?;
            Ok(DMatrix::from_fn(k, k, |i, j| inv[(i, j)] / (sd[i] * sd[j])))
        }
    }
}

fn most_collinear(corr: &DMatrix<f64>) -> (usize, usize) {
    let k = corr.nrows();
    let mut best = (0, 1.min(k - 1), -1.0);
    for i in 0..k {
        for j in i + 1..k {
            if corr[(i, j)].abs() > best.2 {
                best = (i, j, corr[(i, j)].abs());
            }
        }
    }
    (best.0, best.1)
}

pub(crate) fn trace_objective(gammas: &[DMatrix<f64>], w: &DMatrix<f64>) -> f64 {
    gammas[1..]
        .iter()
        .map(|g| {
            let gw = g * w;
            let gtw = g.transpose() * w;
            (gw * gtw).trace()
        })
        .sum()
}

/// Settings shared by the objective and the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcovConfig {
    pub transforms: TransformSpec,
    pub h: usize,
    pub weighting: Weighting,
}

impl Default for GcovConfig {
    fn default() -> Self {
        Self {
            transforms: TransformSpec::powers(&[1.0, 2.0]),
            h: 2,
            weighting: Weighting::Full,
        }
    }
}

impl GcovConfig {
    pub fn new(transforms: TransformSpec, h: usize) -> Self {
        Self {
            transforms,
            h,
            weighting: Weighting::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.transforms.validate()?;
        if self.h == 0 {
            return Err(Error::validation("H must be at least 1"));
        }
        Ok(())
    }
}

/// L_T(θ, H) on a residual sequence.
pub fn objective_from_residuals(resid: &[f64], cfg: &GcovConfig) -> Result<f64> {
    cfg.validate()?;
    if resid.len() <= cfg.h + 10 {
        return Err(Error::validation(format!(
            "{} residuals are too few for H = {}",
            resid.len(),
            cfg.h
        )));
    }
    let k = cfg.transforms.k();
    let a = transformed(resid, &cfg.transforms);
    let gammas = autocovariances(&a, k, cfg.h);
    let w = weight_matrix(&gammas[0], cfg.weighting)?;
    Ok(trace_objective(&gammas, &w))
}

/// L_T(θ, H) = Σ_{h=1}^{H} Tr[Γ̂(h) Γ̂(0)⁻¹ Γ̂(h)' Γ̂(0)⁻¹].
pub fn gcov_objective(y: &[f64], order: Order, theta: &[f64], cfg: &GcovConfig) -> Result<f64> {
    if theta.len() != order.dim() {
        return Err(Error::validation(format!(
            "θ has {} entries, MAR({},{}) needs {}",
            theta.len(),
            order.r,
            order.s,
            order.dim()
        )));
    }
    objective_from_residuals(&residuals(y, order, theta), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn residuals_identity_and_constant() {
        let y = [1.0, -2.0, 3.0, 0.5];
        assert_eq!(residuals(&y, Order::MAR11, &[0.0, 0.0]), vec![-2.0, 3.0]);
        let c = residuals(&[2.0; 6], Order::MAR11, &[0.3, 0.6]);
        assert_eq!(c.len(), 4);
        for r in c {
            assert_relative_eq!(r, 0.7 * 0.4 * 2.0, epsilon = 1e-15);
        }
        assert_eq!(residuals(&y, Order::MAR01, &[0.5]), vec![2.0, -3.5, 2.75]);
        assert_eq!(residuals(&y, Order::MAR10, &[0.5]), vec![-2.5, 4.0, -1.0]);
    }

    #[test]
    fn transform_signs() {
        let tf = TransformSpec::fractional_k4();
        assert_eq!(TransformSpec::integer_powers(3).exponents, vec![1.0, 2.0, 3.0]);
        let mut out = [0.0; 4];
        tf.apply_into(-4.0, &mut out);
        assert_eq!(out, [2.0, -4.0, 8.0, 16.0]);
        let lg = TransformSpec::log_abs_powers(&[1.0, 2.0]);
        let mut out = [0.0; 2];
        lg.apply_into(-std::f64::consts::E, &mut out);
        assert_relative_eq!(out[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(out[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn transform_validation() {
        assert!(TransformSpec::powers(&[1.0]).validate().is_err());
        assert!(TransformSpec::powers(&[1.0, 1.0]).validate().is_err());
        assert!(TransformSpec::powers(&[1.0, -2.0]).validate().is_err());
        assert_eq!(TransformSpec::powers(&[1.0, 2.0]).label(), "powers(1,2)");
    }

    /// Hand-evaluated trace on a ten-point residual sequence.
    #[test]
    fn tiny_sample_matches_manual_arithmetic() {
        let e = [0.5, -1.0, 2.0, 0.0, 1.5, -0.5, 1.0, -2.0, 0.25, 0.75];
        let n = e.len() as f64;
        // columns e and e², demeaned
        let m1 = e.iter().sum::<f64>() / n;
        let m2 = e.iter().map(|x| x * x).sum::<f64>() / n;
        let a: Vec<[f64; 2]> = e.iter().map(|x| [x - m1, x * x - m2]).collect();
        let cov =
            |h: usize, i: usize, j: usize| -> f64 { (h..a.len()).map(|t| a[t][i] * a[t - h][j]).sum::<f64>() / n };
        let g0 = [[cov(0, 0, 0), cov(0, 0, 1)], [cov(0, 1, 0), cov(0, 1, 1)]];
        let det = g0[0][0] * g0[1][1] - g0[0][1] * g0[1][0];
        let inv = [[g0[1][1] / det, -g0[0][1] / det], [-g0[1][0] / det, g0[0][0] / det]];
        let g1 = [[cov(1, 0, 0), cov(1, 0, 1)], [cov(1, 1, 0), cov(1, 1, 1)]];
        let mul = |x: [[f64; 2]; 2], y: [[f64; 2]; 2]| -> [[f64; 2]; 2] {
            let mut z = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    z[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
                }
            }
            z
        };
        let g1t = [[g1[0][0], g1[1][0]], [g1[0][1], g1[1][1]]];
        let prod = mul(mul(mul(g1, inv), g1t), inv);
        let expected = prod[0][0] + prod[1][1];

        let cfg = GcovConfig::new(TransformSpec::powers(&[1.0, 2.0]), 1);
        // bypass the length guard, which protects estimation rather than arithmetic
        let a_flat = transformed(&e, &cfg.transforms);
        let gammas = autocovariances(&a_flat, 2, 1);
        let w = weight_matrix(&gammas[0], Weighting::Full).unwrap();
        assert_relative_eq!(trace_objective(&gammas, &w), expected, epsilon = 1e-12);
        assert!(objective_from_residuals(&e, &cfg).is_err());
    }

    #[test]
    fn orthogonal_at_all_lags_gives_zero() {
        // nonzero rows three apart, so every product at lags 1 and 2 vanishes
        let rows = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let mut a = Vec::new();
        for _ in 0..10 {
            for r in rows {
                a.extend_from_slice(&r);
                a.extend_from_slice(&[0.0; 4]);
            }
        }
        let g = autocovariances(&a, 2, 2);
        let w = weight_matrix(&g[0], Weighting::Full).unwrap();
        assert_eq!(trace_objective(&g, &w), 0.0);
    }

    #[test]
    fn singular_gamma0_names_the_pair() {
        // second transform equals the first for ±1 residuals: e³ = e
        let e: Vec<f64> = (0..100).map(|i| if (i * 7) % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let cfg = GcovConfig::new(TransformSpec::powers(&[1.0, 3.0]), 1);
        match objective_from_residuals(&e, &cfg) {
            Err(Error::SingularCovariance { first, second }) => assert_eq!((first, second), (0, 1)),
            other => panic!("{other:?}"),
        }
        let diag = GcovConfig {
            weighting: Weighting::Diagonal,
            ..cfg
        };
        assert!(objective_from_residuals(&e, &diag).unwrap() >= 0.0);
    }
}
