//! Derivative-free simplex minimization inside the open box (−0.999, 0.999)^d.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Proposals with any coordinate outside `(-BOX, BOX)` are rejected.
pub const BOX: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    /// Stop when the spread of simplex values falls below this...
    pub f_tol: f64,
    /// ...and every vertex is within this distance of the best one.
    pub x_tol: f64,
    pub max_evals: usize,
    pub initial_step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-10,
            x_tol: 1e-8,
            max_evals: 4000,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmResult {
    pub start: Vec<f64>,
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

fn inside(x: &[f64]) -> bool {
    x.iter().all(|v| v.abs() < BOX)
}

/// Nelder–Mead with standard coefficients (1, 2, 0.5, 0.5).
///
/// Points outside the box, and points where `f` is not finite, count as
/// +∞, so the simplex never leaves the box.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], opts: &NmOptions) -> NmResult {
    let d = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| -> f64 {
        if !inside(x) {
            return f64::INFINITY;
        }
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += if x0[i] + opts.initial_step < BOX {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();
    let mut converged = false;

    while evals.get() < opts.max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[d] - values[0];
        let diameter = simplex[1..].iter().map(|p| dist(p, &simplex[0])).fold(0.0, f64::max);
        if values[0].is_finite() && spread < opts.f_tol && diameter < opts.x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[d]).map(|(c, w)| c + t * (w - c)).collect() };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=d {
            let p: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            values[i] = eval(&p);
            simplex[i] = p;
        }
    }

    let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    NmResult {
        start: x0.to_vec(),
        x: simplex[best].clone(),
        fx: values[best],
        evals: evals.get(),
        converged,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// How the multi-start search picks its starting points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartStrategy {
    /// A local search from every point of the 0.1-spaced grid.
    FullGrid,
    /// Evaluate the objective on the grid and search from the `best` lowest points.
    Prescreen { best: usize },
}

/// The points −0.9, −0.8, …, 0.9 in every coordinate.
pub fn start_grid(dim: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (-9..=9).map(|i| i as f64 / 10.0).collect();
    let mut grid: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..dim {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |a| {
                    let mut q = p.clone();
                    q.push(*a);
                    q
                })
            })
            .collect();
    }
    grid
}

/// Runs local searches from `starts` and returns every result in start order.
pub fn multi_start<F>(f: &F, starts: &[Vec<f64>], opts: &NmOptions) -> Vec<NmResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    starts.par_iter().map(|s| nelder_mead(f, s, opts)).collect()
}

/// Starting points for `strategy`: the full grid, or its best `k` points by
/// objective value (ties broken by grid order).
pub fn select_starts<F>(f: &F, dim: usize, strategy: StartStrategy) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let grid = start_grid(dim);
    match strategy {
        StartStrategy::FullGrid => grid,
        StartStrategy::Prescreen { best } => {
            let values: Vec<f64> = grid
                .par_iter()
                .map(|p| {
                    let v = f(p);
                    if v.is_finite() {
                        v
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            let mut idx: Vec<usize> = (0..grid.len()).collect();
            idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            idx.truncate(best.max(1));
            idx.into_iter().map(|i| grid[i].clone()).collect()
        }
    }
}

/// Lowest converged result; ties keep the earlier start.
pub fn best_converged(results: &[NmResult]) -> Option<&NmResult> {
    results
        .iter()
        .filter(|r| r.converged && r.fx.is_finite())
        .min_by(|a, b| a.fx.total_cmp(&b.fx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.5).powi(2);
        let r = nelder_mead(&f, &[0.0, 0.0], &NmOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-6 && (r.x[1] + 0.5).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn stays_inside_box() {
        // unconstrained minimum at 2
        let f = |x: &[f64]| (x[0] - 2.0).powi(2);
        let r = nelder_mead(&f, &[0.5], &NmOptions::default());
        assert!(r.x[0] < BOX && r.x[0] > 0.99, "{:?}", r.x);
    }

    #[test]
    fn multimodal_needs_multistart() {
        // local minimum near -0.6, global near 0.7
        let f = |x: &[f64]| (x[0] + 0.6).powi(2) * (x[0] - 0.7).powi(2) + 0.05 * (x[0] - 0.7).powi(2);
        let local = nelder_mead(&f, &[-0.8], &NmOptions::default());
        assert!(local.x[0] < 0.0);
        let all = multi_start(&f, &start_grid(1), &NmOptions::default());
        let best = best_converged(&all).unwrap();
        assert!((best.x[0] - 0.7).abs() < 1e-4);
        let pre = select_starts(&f, 1, StartStrategy::Prescreen { best: 2 });
        assert_eq!(pre.len(), 2);
        assert!((pre[0][0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn grid_shape() {
        let g = start_grid(2);
        assert_eq!(g.len(), 361);
        assert_eq!(g[0], vec![-0.9, -0.9]);
        assert!((g[360][1] - 0.9).abs() < 1e-15);
    }
}
