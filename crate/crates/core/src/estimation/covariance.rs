//! Asymptotic covariance of √T(θ̂ − θ): numerical sandwich and parametric bootstrap.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use super::objective::{autocovariances, residuals, transformed, weight_matrix, GcovConfig, Order};
use super::optimize::{nelder_mead, NmOptions};
use crate::error::{Error, Result};
use crate::model::{filter, stream_rng, ErrorDist, MarModel};

fn step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

/// Central-difference Hessian of `f` at `x`.
pub(crate) fn hessian<F: Fn(&[f64]) -> Result<f64>>(f: &F, x: &[f64]) -> Result<DMatrix<f64>> {
    let d = x.len();
    let f0 = f(x)?;
    let mut h = DMatrix::zeros(d, d);
    let at = |di: &[(usize, f64)]| -> Result<f64> {
        let mut p = x.to_vec();
        for (i, s) in di {
            p[*i] += s;
        }
        f(&p)
    };
    for i in 0..d {
        let si = step(x[i]);
        h[(i, i)] = (at(&[(i, si)])? - 2.0 * f0 + at(&[(i, -si)])?) / (si * si);
        for j in 0..i {
            let sj = step(x[j]);
            let v = (at(&[(i, si), (j, sj)])? - at(&[(i, si), (j, -sj)])? - at(&[(i, -si), (j, sj)])?
                + at(&[(i, -si), (j, -sj)])?)
                / (4.0 * si * sj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// Symmetrizes and clips negative eigenvalues; the flag reports whether clipping happened.
pub fn project_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) {
        return (sym, false);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    ((&out + out.transpose()) * 0.5, true)
}

/// Sandwich pieces at θ̂.
pub(crate) struct Sandwich {
    pub omega: DMatrix<f64>,
    pub j: DMatrix<f64>,
}

/// J⁻¹ I J⁻¹ with J the Hessian of L_T and I the mean outer product of the
/// per-observation score contributions
/// g_t = 2 Σ_h a_t' W (∂Γ̂(h)/∂θ) W a_{t−h}.
pub(crate) fn sandwich(y: &[f64], order: Order, theta: &[f64], cfg: &GcovConfig) -> Result<Sandwich> {
    let dim = theta.len();
    let k = cfg.transforms.k();
    let objective = |th: &[f64]| -> Result<f64> {
        let a = transformed(&residuals(y, order, th), &cfg.transforms);
        let g = autocovariances(&a, k, cfg.h);
        let w = weight_matrix(&g[0], cfg.weighting)?;
        Ok(super::objective::trace_objective(&g, &w))
    };
    let j = hessian(&objective, theta)?;

    let gammas_at = |th: &[f64]| {
        let a = transformed(&residuals(y, order, th), &cfg.transforms);
        autocovariances(&a, k, cfg.h)
    };
    let a = transformed(&residuals(y, order, theta), &cfg.transforms);
    let n = a.len() / k;
    let g0 = autocovariances(&a, k, 0);
    let w = weight_matrix(&g0[0], cfg.weighting)?;

    // dgamma[p][h] = ∂Γ̂(h)/∂θ_p
    let dgamma: Vec<Vec<DMatrix<f64>>> = (0..dim)
        .map(|p| {
            let s = step(theta[p]);
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[p] += s;
            dn[p] -= s;
            let gu = gammas_at(&up);
            let gd = gammas_at(&dn);
            gu.iter().zip(&gd).map(|(u, d)| (u - d) / (2.0 * s)).collect()
        })
        .collect();
    // B[p][h] = W D W
    let b: Vec<Vec<DMatrix<f64>>> = dgamma
        .iter()
        .map(|dp| dp.iter().map(|d| &w * d * &w).collect())
        .collect();

    let mut info = DMatrix::zeros(dim, dim);
    let mut g = vec![0.0; dim];
    for t in 0..n {
        let at = nalgebra::DVectorView::from_slice(&a[t * k..(t + 1) * k], k);
        for (p, gp) in g.iter_mut().enumerate() {
            *gp = 0.0;
            for h in 1..=cfg.h.min(t) {
                let ah = nalgebra::DVectorView::from_slice(&a[(t - h) * k..(t - h + 1) * k], k);
                *gp += 2.0 * at.dot(&(&b[p][h] * ah));
            }
        }
        for p in 0..dim {
            for q in 0..dim {
                info[(p, q)] += g[p] * g[q];
            }
        }
    }
    info /= n as f64;

    let j_inv = j
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("objective Hessian is singular at the estimate"))?;
    Ok(Sandwich {
        omega: &j_inv * info * &j_inv,
        j,
    })
}

/// Parametric bootstrap: resample residuals, rebuild paths with θ̂, refit
/// locally from θ̂, and scale the sample covariance of the refits by n.
///
/// Returns the covariance and the number of refits that failed.
pub(crate) fn bootstrap(
    y: &[f64],
    order: Order,
    theta: &[f64],
    cfg: &GcovConfig,
    replications: usize,
    seed: u64,
    burn: usize,
) -> Result<(DMatrix<f64>, usize)> {
    let resid = residuals(y, order, theta);
    let (phi, psi) = order.split(theta);
    let m = MarModel {
        r: order.r,
        s: order.s,
        phi,
        psi,
        dist: ErrorDist::Cauchy { scale: 1.0 },
        ar2: None,
    };
    let t_len = y.len();
    let opts = NmOptions::default();
    let draws: Vec<Option<Vec<f64>>> = (0..replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let eps: Vec<f64> = (0..t_len + 2 * burn)
                .map(|_| resid[rng.random_range(0..resid.len())])
                .collect();
            let path = filter(&m, &eps);
            let ystar = &path[burn..burn + t_len];
            let f = |th: &[f64]| -> f64 {
                super::objective::gcov_objective(ystar, order, th, cfg).unwrap_or(f64::INFINITY)
            };
            let r = nelder_mead(&f, theta, &opts);
            r.converged.then_some(r.x)
        })
        .collect();
    let ok: Vec<Vec<f64>> = draws.iter().flatten().cloned().collect();
    let failures = replications - ok.len();
    if ok.len() < 2 {
        return Err(Error::numerical("fewer than two bootstrap refits converged"));
    }
    let dim = theta.len();
    let mean: Vec<f64> = (0..dim)
        .map(|p| ok.iter().map(|x| x[p]).sum::<f64>() / ok.len() as f64)
        .collect();
    let mut cov = DMatrix::zeros(dim, dim);
    for x in &ok {
        for p in 0..dim {
            for q in 0..dim {
                cov[(p, q)] += (x[p] - mean[p]) * (x[q] - mean[q]);
            }
        }
    }
    cov /= (ok.len() - 1) as f64;
    Ok((cov * resid.len() as f64, failures))
}
