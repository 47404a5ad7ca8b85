//! GCov estimation of MAR(r, s) models, its chi-square specification test,
//! and OLS for the purely noncausal case.

mod covariance;
mod objective;
mod optimize;

pub use covariance::project_psd;
pub use objective::{
    gcov_objective, objective_from_residuals, residuals, GcovConfig, Order, TransformKind, TransformSpec, Weighting,
};
pub use optimize::{
    best_converged, multi_start, nelder_mead, select_starts, start_grid, NmOptions, NmResult, StartStrategy, BOX,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Local searches started from the best grid points by default.
pub const DEFAULT_PRESCREEN: usize = 8;

/// |θ̂_i| at or above this is reported as a boundary solution.
pub const BOUNDARY: f64 = 0.998;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceMethod {
    Sandwich,
    Bootstrap {
        replications: usize,
        seed: u64,
        burn: usize,
    },
    /// Skip the covariance (Ω̂ = 0); for callers that only need θ̂.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcovOptions {
    pub config: GcovConfig,
    pub starts: StartStrategy,
    pub covariance: CovarianceMethod,
    pub nm: NmOptionsSerde,
}

/// Serializable copy of [`NmOptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmOptionsSerde {
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_evals: usize,
}

impl From<NmOptionsSerde> for NmOptions {
    fn from(o: NmOptionsSerde) -> Self {
        NmOptions {
            f_tol: o.f_tol,
            x_tol: o.x_tol,
            max_evals: o.max_evals,
            ..NmOptions::default()
        }
    }
}

impl Default for NmOptionsSerde {
    fn default() -> Self {
        let d = NmOptions::default();
        Self {
            f_tol: d.f_tol,
            x_tol: d.x_tol,
            max_evals: d.max_evals,
        }
    }
}

impl Default for GcovOptions {
    fn default() -> Self {
        Self {
            config: GcovConfig::default(),
            starts: StartStrategy::Prescreen {
                best: DEFAULT_PRESCREEN,
            },
            covariance: CovarianceMethod::Sandwich,
            nm: NmOptionsSerde::default(),
        }
    }
}

impl GcovOptions {
    pub fn with_config(config: GcovConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Some |θ̂_i| ≥ [`BOUNDARY`].
    Boundary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcovFit {
    pub order: Order,
    pub theta: Vec<f64>,
    /// Estimated covariance of √n(θ̂ − θ), n = number of residuals.
    pub omega: DMatrix<f64>,
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub config: GcovConfig,
    /// Length of the fitted series.
    pub t_len: usize,
    pub status: FitStatus,
    /// True if Ω̂ had negative eigenvalues clipped.
    pub omega_projected: bool,
    pub starts: usize,
    pub converged_starts: usize,
    /// Bootstrap refits that failed, when the bootstrap was used.
    pub bootstrap_failures: Option<usize>,
}

impl GcovFit {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn stderr(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.theta.len())
            .map(|i| (self.omega[(i, i)].max(0.0) / n).sqrt())
            .collect()
    }

    pub fn phi_psi(&self) -> (f64, f64) {
        self.order.split(&self.theta)
    }

    pub fn estimate(&self) -> ParamEstimate {
        ParamEstimate::from_theta(self.order, &self.theta, &self.omega, self.n())
    }
}

/// Minimizes L_T over the open box from a fixed grid of starting points.
pub fn gcov_estimate(y: &[f64], order: Order, opts: &GcovOptions) -> Result<GcovFit> {
    let order = Order::new(order.r, order.s)?;
    opts.config.validate()?;
    if y.len() < opts.config.h + 12 + order.dim() {
        return Err(Error::validation(format!("series of length {} is too short", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("series contains non-finite values"));
    }
    let cfg = &opts.config;
    let f = |th: &[f64]| -> f64 { gcov_objective(y, order, th, cfg).unwrap_or(f64::INFINITY) };
    let starts = select_starts(&f, order.dim(), opts.starts);
    let nm: NmOptions = opts.nm.into();
    let results = multi_start(&f, &starts, &nm);
    let converged_starts = results.iter().filter(|r| r.converged).count();
    let best = match best_converged(&results) {
        Some(b) => b.clone(),
        None => {
            // surface the data problem if the objective cannot be evaluated at all
            gcov_objective(y, order, &vec![0.0; order.dim()], cfg)?;
            return Err(Error::Optimization { starts: starts.len() });
        }
    };
    let theta = best.x.clone();
    let resid = residuals(y, order, &theta);
    let status = if theta.iter().any(|v| v.abs() >= BOUNDARY) {
        FitStatus::Boundary
    } else {
        FitStatus::Converged
    };

    let (omega, projected, bootstrap_failures) = match opts.covariance {
        CovarianceMethod::Sandwich => {
            let s = covariance::sandwich(y, order, &theta, cfg)?;
            let (o, p) = project_psd(&s.omega);
            (o, p, None)
        }
        CovarianceMethod::Bootstrap {
            replications,
            seed,
            burn,
        } => {
            let (c, failures) = covariance::bootstrap(y, order, &theta, cfg, replications, seed, burn)?;
            let (o, p) = project_psd(&c);
            (o, p, Some(failures))
        }
        CovarianceMethod::None => (DMatrix::zeros(order.dim(), order.dim()), false, None),
    };

    Ok(GcovFit {
        order,
        theta,
        omega,
        objective: best.fx,
        residuals: resid,
        config: cfg.clone(),
        t_len: y.len(),
        status,
        omega_projected: projected,
        starts: starts.len(),
        converged_starts,
        bootstrap_failures,
    })
}

/// Hessian of L_T at θ̂, exposed for diagnostics (efficient-weighting
/// theory predicts Ω ≈ 2 J⁻¹).
pub fn objective_hessian(y: &[f64], order: Order, theta: &[f64], cfg: &GcovConfig) -> Result<DMatrix<f64>> {
    Ok(covariance::sandwich(y, order, theta, cfg)?.j)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecTest {
    pub stat: f64,
    pub df: usize,
    pub pvalue: f64,
    pub reject_5pct: bool,
}

/// T·L_T(θ̂) against χ²(HK² − dim θ).
pub fn gcov_spec_test(fit: &GcovFit, t_len: usize) -> Result<SpecTest> {
    spec_test_from(
        fit.objective,
        t_len,
        fit.config.h,
        fit.config.transforms.k(),
        fit.theta.len(),
    )
}

pub fn spec_test_from(objective: f64, t_len: usize, h: usize, k: usize, dim: usize) -> Result<SpecTest> {
    let moments = h * k * k;
    if moments <= dim {
        return Err(Error::validation(format!(
            "H·K² = {moments} must exceed the number of parameters {dim}"
        )));
    }
    let df = moments - dim;
    let stat = t_len as f64 * objective;
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::numerical(e.to_string()))?;
    let pvalue = if stat <= 0.0 { 1.0 } else { chi.sf(stat) };
    Ok(SpecTest {
        stat,
        df,
        pvalue,
        reject_5pct: pvalue < 0.05,
    })
}

/// Upper 5% point of χ²(df).
pub fn chi2_critical_5pct(df: usize) -> Result<f64> {
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::numerical(e.to_string()))?;
    Ok(chi.inverse_cdf(0.95))
}

/// OLS regression of y_t on y_{t+1} without intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub psi: f64,
    pub stderr: f64,
    /// n·stderr², the variance of √n(ψ̂ − ψ).
    pub omega: f64,
    pub rss: f64,
    pub n: usize,
}

impl OlsFit {
    pub fn estimate(&self) -> ParamEstimate {
        ParamEstimate {
            r: 0,
            s: 1,
            phi: 0.0,
            psi: self.psi,
            omega: [[0.0, 0.0], [0.0, self.omega]],
            n: self.n,
        }
    }
}

pub fn ols_noncausal(y: &[f64]) -> Result<OlsFit> {
    if y.len() < 10 {
        return Err(Error::validation("OLS needs at least 10 observations"));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for w in y.windows(2) {
        sxy += w[0] * w[1];
        sxx += w[1] * w[1];
    }
    if !(sxx > 0.0) {
        return Err(Error::numerical("regressor y_{t+1} has zero variation"));
    }
    let psi = sxy / sxx;
    let rss: f64 = y.windows(2).map(|w| (w[0] - psi * w[1]).powi(2)).sum();
    let n = y.len() - 1;
    let se2 = rss / (n - 1) as f64 / sxx;
    Ok(OlsFit {
        psi,
        stderr: se2.sqrt(),
        omega: se2 * n as f64,
        rss,
        n,
    })
}

/// Point estimates in (φ, ψ) form with Ω̂ laid out on (φ, ψ); rows and
/// columns of absent parameters are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub r: u8,
    pub s: u8,
    pub phi: f64,
    pub psi: f64,
    pub omega: [[f64; 2]; 2],
    /// Sample size behind Ω̂; bands use √n.
    pub n: usize,
}

impl ParamEstimate {
    pub fn from_theta(order: Order, theta: &[f64], omega: &DMatrix<f64>, n: usize) -> Self {
        let (phi, psi) = order.split(theta);
        let mut o = [[0.0; 2]; 2];
        let slots: Vec<usize> = match (order.r, order.s) {
            (1, 1) => vec![0, 1],
            (1, 0) => vec![0],
            _ => vec![1],
        };
        for (i, si) in slots.iter().enumerate() {
            for (j, sj) in slots.iter().enumerate() {
                o[*si][*sj] = omega[(i, j)];
            }
        }
        Self {
            r: order.r,
            s: order.s,
            phi,
            psi,
            omega: o,
            n,
        }
    }

    /// Known parameters with a given Ω̂ (e.g. true values in simulation studies).
    pub fn known(r: u8, s: u8, phi: f64, psi: f64, omega: [[f64; 2]; 2], n: usize) -> Self {
        Self {
            r,
            s,
            phi,
            psi,
            omega,
            n,
        }
    }
}

/// JSON fit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub r: u8,
    pub s: u8,
    pub theta: Vec<f64>,
    pub stderr: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    pub objective: Option<f64>,
    pub test: Option<TestReport>,
    pub config: Option<ConfigReport>,
    pub status: String,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub stat: f64,
    pub df: usize,
    pub pvalue: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ConfigReport {
    pub K: usize,
    pub H: usize,
    pub transforms: String,
}

impl FitReport {
    pub fn from_gcov(fit: &GcovFit) -> Result<Self> {
        let test = gcov_spec_test(fit, fit.t_len)?;
        let d = fit.theta.len();
        Ok(Self {
            method: "gcov".into(),
            r: fit.order.r,
            s: fit.order.s,
            theta: fit.theta.clone(),
            stderr: fit.stderr(),
            omega: (0..d).map(|i| (0..d).map(|j| fit.omega[(i, j)]).collect()).collect(),
            objective: Some(fit.objective),
            test: Some(TestReport {
                stat: test.stat,
                df: test.df,
                pvalue: test.pvalue,
            }),
            config: Some(ConfigReport {
                K: fit.config.transforms.k(),
                H: fit.config.h,
                transforms: fit.config.transforms.label(),
            }),
            status: match fit.status {
                FitStatus::Converged => "converged".into(),
                FitStatus::Boundary => "boundary".into(),
            },
            n: fit.n(),
        })
    }

    pub fn from_ols(fit: &OlsFit) -> Self {
        Self {
            method: "ols".into(),
            r: 0,
            s: 1,
            theta: vec![fit.psi],
            stderr: vec![fit.stderr],
            omega: vec![vec![fit.omega]],
            objective: None,
            test: None,
            config: None,
            status: "converged".into(),
            n: fit.n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spec_test_degrees_and_critical_value() {
        let t = spec_test_from(7.14 / 300.0, 300, 2, 2, 2).unwrap();
        assert_eq!(t.df, 6);
        assert_relative_eq!(t.stat, 7.14, epsilon = 1e-12);
        assert!(!t.reject_5pct);
        assert!((chi2_critical_5pct(6).unwrap() - 12.59).abs() < 0.005);
        assert_eq!(spec_test_from(0.0, 300, 2, 2, 2).unwrap().pvalue, 1.0);
        assert!(spec_test_from(0.1, 300, 1, 1, 2).is_err());
    }

    #[test]
    fn ols_exact_fit() {
        let mut y = vec![1.0; 20];
        for t in (0..19).rev() {
            y[t] = 0.9 * y[t + 1];
        }
        let f = ols_noncausal(&y).unwrap();
        assert_relative_eq!(f.psi, 0.9, epsilon = 1e-14);
        assert!(f.rss < 1e-25);
        assert!(ols_noncausal(&[0.0; 12]).is_err());
        assert!(ols_noncausal(&[1.0; 5]).is_err());
    }

    #[test]
    fn param_estimate_layout() {
        let om = DMatrix::from_row_slice(1, 1, &[4.0]);
        let e = ParamEstimate::from_theta(Order::MAR01, &[0.7], &om, 10);
        assert_eq!((e.phi, e.psi), (0.0, 0.7));
        assert_eq!(e.omega, [[0.0, 0.0], [0.0, 4.0]]);
        let e = ParamEstimate::from_theta(Order::MAR10, &[0.2], &om, 10);
        assert_eq!(e.omega, [[4.0, 0.0], [0.0, 0.0]]);
    }
}
