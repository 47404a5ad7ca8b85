//! Conditional moments of the latent components of a Cauchy MAR(1,1) process
//! given (y_t, y_{t−1}), for 0 < ψ < 1.
//!
//! The noncausal component u_t = y_t − φ y_{t−1} is a Cauchy noncausal AR(1)
//! with E(u_{t+1}|u_t) = u_t and E(u_{t+1}²|u_t) = u_t²/ψ + σ²/(ψ(1−ψ)).
//! Everything below follows from y_{t+1} = φ y_t + u_{t+1}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalState {
    pub y_t: f64,
    pub y_tm1: f64,
    /// Cauchy scale of the errors.
    pub sigma: f64,
}

impl ConditionalState {
    pub fn new(y_t: f64, y_tm1: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::validation(format!("error scale must be positive, got {sigma}")));
        }
        if !(y_t.is_finite() && y_tm1.is_finite()) {
            return Err(Error::validation("conditioning values must be finite"));
        }
        Ok(Self { y_t, y_tm1, sigma })
    }
}

fn check(phi: f64, psi: f64) -> Result<()> {
    if psi == 0.0 {
        return Err(Error::numerical("psi = 0 divides by zero in the conditional moments"));
    }
    if psi < 0.0 {
        return Err(Error::Unsupported("conditional latent moments need psi > 0".into()));
    }
    if !(psi < 1.0) || !(phi.abs() < 1.0) {
        return Err(Error::Stationarity(format!(
            "need |phi| < 1 and 0 < psi < 1, got phi = {phi}, psi = {psi}"
        )));
    }
    Ok(())
}

/// E[y_{t+1}|·] and E[y_{t+1}²|·] = a y_t² − 2b y_t y_{t−1} + c y_{t−1}² + σ²/(ψ(1−ψ)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingBlocks {
    pub mean: f64,
    pub second_moment: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn cond_building_blocks(state: &ConditionalState, phi: f64, psi: f64) -> Result<BuildingBlocks> {
    check(phi, psi)?;
    let (y, y1, s) = (state.y_t, state.y_tm1, state.sigma);
    let a = phi * phi + 2.0 * phi + 1.0 / psi;
    let b = phi * phi + phi / psi;
    let c = phi * phi / psi;
    Ok(BuildingBlocks {
        mean: (y - phi * y1) + phi * y,
        second_moment: a * y * y - 2.0 * b * y * y1 + c * y1 * y1 + s * s / (psi * (1.0 - psi)),
        a,
        b,
        c,
    })
}

/// Coefficients of y_t², y_t y_{t−1}, y_{t−1}² and the constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub yy: f64,
    pub yy1: f64,
    pub y1y1: f64,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn eval(&self, state: &ConditionalState) -> f64 {
        let (y, y1) = (state.y_t, state.y_tm1);
        self.yy * y * y + self.yy1 * y * y1 + self.y1y1 * y1 * y1 + self.constant
    }
}

/// E[u_{t+1} v_t|·] composed as −φ y_t² − ψ E[y_{t+1}²|·] + (φψ + 1) y_t E[y_{t+1}|·].
pub fn cond_cov_uv(state: &ConditionalState, phi: f64, psi: f64) -> Result<f64> {
    let bb = cond_building_blocks(state, phi, psi)?;
    let y = state.y_t;
    Ok(-phi * y * y - psi * bb.second_moment + (phi * psi + 1.0) * y * bb.mean)
}

/// Coefficients of the composed form:
/// −φψ y_t² + φ(1 + φψ) y_t y_{t−1} − φ² y_{t−1}² − σ²/(1 − ψ).
pub fn composed_form(phi: f64, psi: f64, sigma: f64) -> Result<QuadraticForm> {
    check(phi, psi)?;
    Ok(QuadraticForm {
        yy: -phi * psi,
        yy1: phi * (1.0 + phi * psi),
        y1y1: -phi * phi,
        constant: -sigma * sigma / (1.0 - psi),
    })
}

/// Closed form as commonly printed:
/// y_t²(φ − 1)φψ + y_t y_{t−1}[2φ − φ(1 − φψ)] − y_{t−1}² + σ²/(1 − ψ).
pub fn printed_form(phi: f64, psi: f64, sigma: f64) -> Result<QuadraticForm> {
    check(phi, psi)?;
    Ok(QuadraticForm {
        yy: (phi - 1.0) * phi * psi,
        yy1: 2.0 * phi - phi * (1.0 - phi * psi),
        y1y1: -1.0,
        constant: sigma * sigma / (1.0 - psi),
    })
}

pub fn cond_cov_uv_printed(state: &ConditionalState, phi: f64, psi: f64) -> Result<f64> {
    Ok(printed_form(phi, psi, state.sigma)?.eval(state))
}

/// Both forms side by side with their coefficient-wise gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsReport {
    pub state: ConditionalState,
    pub phi: f64,
    pub psi: f64,
    pub building_blocks: BuildingBlocks,
    pub composed: f64,
    pub printed: f64,
    pub difference: f64,
    /// E[u_{t+1} v_t|·]/y_t², absent when y_t = 0.
    pub expected_xi: Option<f64>,
    pub composed_terms: QuadraticForm,
    pub printed_terms: QuadraticForm,
    /// Coefficients where the two forms disagree.
    pub divergent_terms: Vec<String>,
}

pub fn moments_report(state: &ConditionalState, phi: f64, psi: f64) -> Result<MomentsReport> {
    let bb = cond_building_blocks(state, phi, psi)?;
    let composed = cond_cov_uv(state, phi, psi)?;
    let printed = cond_cov_uv_printed(state, phi, psi)?;
    let ct = composed_form(phi, psi, state.sigma)?;
    let pt = printed_form(phi, psi, state.sigma)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
    let divergent_terms = [
        ("y_t^2", ct.yy, pt.yy),
        ("y_t*y_t-1", ct.yy1, pt.yy1),
        ("y_t-1^2", ct.y1y1, pt.y1y1),
        ("constant", ct.constant, pt.constant),
    ]
    .into_iter()
    .filter(|(_, a, b)| !close(*a, *b))
    .map(|(n, _, _)| n.to_string())
    .collect();
    Ok(MomentsReport {
        state: *state,
        phi,
        psi,
        building_blocks: bb,
        composed,
        printed,
        difference: printed - composed,
        expected_xi: (state.y_t != 0.0).then(|| composed / (state.y_t * state.y_t)),
        composed_terms: ct,
        printed_terms: pt,
        divergent_terms,
    })
}

/// y_{t+h} = φ^{h+1} y_{t−1} + Σ_{j=0}^{h} φ^{h−j} u_{t+j}.
///
/// Returns the coefficient on y_{t−1} and the coefficients on u_t..=u_{t+h}.
pub fn forward_representation(phi: f64, h: usize) -> (f64, Vec<f64>) {
    let p = phi.powi(h as i32 + 1);
    let q = (0..=h).map(|j| phi.powi((h - j) as i32)).collect();
    (p, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// E[g(u_{t+1}) | u_t = u] by quadrature over the conditional density
    /// f_u(x) f_ε(u − ψx), with u_{t+1} ~ Cauchy(σ/(1−ψ)) independent of ε_t.
    /// Substituting x = s tan θ turns f_u(x) dx into dθ/π.
    fn conditional_expectation(u: f64, psi: f64, sigma: f64, g: impl Fn(f64) -> f64) -> f64 {
        let s = sigma / (1.0 - psi);
        let f_eps = |e: f64| sigma / (std::f64::consts::PI * (sigma * sigma + e * e));
        let n = 400_000;
        let lo = -std::f64::consts::FRAC_PI_2;
        let step = std::f64::consts::PI / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let th = lo + (i as f64 + 0.5) * step;
            let x = s * th.tan();
            let w = f_eps(u - psi * x);
            num += w * g(x);
            den += w;
        }
        num / den
    }

    fn oracle_cov(state: &ConditionalState, phi: f64, psi: f64) -> f64 {
        let u = state.y_t - phi * state.y_tm1;
        let m1 = conditional_expectation(u, psi, state.sigma, |x| x);
        let m2 = conditional_expectation(u, psi, state.sigma, |x| x * x);
        // v_t = (1 − φψ) y_t − ψ u_{t+1}
        (1.0 - phi * psi) * state.y_t * m1 - psi * m2
    }

    #[test]
    fn noncausal_moments_by_quadrature() {
        for (u, psi) in [(0.0, 0.5), (2.0, 0.7), (-3.5, 0.3)] {
            let m1 = conditional_expectation(u, psi, 1.0, |x| x);
            let m2 = conditional_expectation(u, psi, 1.0, |x| x * x);
            assert_relative_eq!(m1, u, epsilon = 1e-3);
            assert_relative_eq!(m2, u * u / psi + 1.0 / (psi * (1.0 - psi)), max_relative = 1e-3);
        }
    }

    #[test]
    fn composed_matches_quadrature_oracle() {
        for (y, y1, phi, psi) in [
            (0.0, 0.0, 0.3, 0.9),
            (2.0, -1.0, 0.3, 0.6),
            (5.0, 4.0, 0.5, 0.8),
            (-1.5, 0.5, 0.0, 0.4),
        ] {
            let st = ConditionalState::new(y, y1, 1.0).unwrap();
            let c = cond_cov_uv(&st, phi, psi).unwrap();
            assert_relative_eq!(c, oracle_cov(&st, phi, psi), max_relative = 2e-3);
            assert_relative_eq!(c, composed_form(phi, psi, 1.0).unwrap().eval(&st), max_relative = 1e-12);
        }
    }

    #[test]
    fn printed_examples() {
        let st = ConditionalState::new(0.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(cond_cov_uv_printed(&st, 0.3, 0.5).unwrap(), 8.0);
        let st = ConditionalState::new(1.3, -0.7, 1.0).unwrap();
        assert_relative_eq!(cond_cov_uv_printed(&st, 0.0, 0.5).unwrap(), -0.49 + 2.0);
        let r = moments_report(&st, 0.3, 0.5).unwrap();
        assert!(r.divergent_terms.contains(&"constant".to_string()));
        assert_relative_eq!(r.difference, r.printed - r.composed);
    }

    #[test]
    fn building_block_examples() {
        let st = ConditionalState::new(1.7, 0.4, 1.0).unwrap();
        let b = cond_building_blocks(&st, 0.0, 0.6).unwrap();
        assert_relative_eq!(b.mean, 1.7);
        assert_relative_eq!(
            b.second_moment,
            1.7 * 1.7 / 0.6 + 1.0 / (0.6 * 0.4),
            max_relative = 1e-14
        );
        let zero = ConditionalState::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(cond_building_blocks(&zero, 0.4, 0.6).unwrap().mean, 0.0);
        assert!(matches!(cond_building_blocks(&st, 0.3, 0.0), Err(Error::Numerical(_))));
        assert!(matches!(cond_cov_uv(&st, 0.3, -0.5), Err(Error::Unsupported(_))));
        assert!(ConditionalState::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn forward_representation_identity() {
        let phi = 0.6;
        let y = [0.3, -1.2, 2.5, 0.7, -0.4, 1.1];
        let u: Vec<f64> = (1..y.len()).map(|i| y[i] - phi * y[i - 1]).collect();
        // t = 1, so y_{t−1} = y[0] and u_t = u[0]
        for h in 0..=3 {
            let (p, q) = forward_representation(phi, h);
            let rhs = p * y[0] + q.iter().enumerate().map(|(j, c)| c * u[j]).sum::<f64>();
            assert_relative_eq!(rhs, y[1 + h], epsilon = 1e-12);
        }
        assert_eq!(forward_representation(phi, 2).0, phi.powi(3));
    }
}
