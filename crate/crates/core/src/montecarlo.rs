//! Size and power experiments for the ξ̂ test.
//!
//! Each replication simulates a path, fits the model, and evaluates the h = 0
//! test at two conditioning points: an exceedance of the upper quantile
//! (size) and the observation at the power quantile whose successor stays
//! below the upper quantile (power). Both metrics share the same paths and
//! fits.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubble::{empirical_quantile, XiStats};
use crate::error::{Error, Result};
use crate::estimation::{gcov_estimate, ols_noncausal, GcovConfig, GcovOptions, Order, TransformSpec};
use crate::model::{simulate_path, stream_rng, ErrorDist, MarModel, DEFAULT_BURN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// MAR(0,1) fitted by OLS of y_t on y_{t+1}.
    Mar01Ols,
    /// MAR(1,1) fitted by GCov.
    Mar11Gcov,
}

/// Which exceedance of the upper quantile conditions the size experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pick {
    #[default]
    First,
    Last,
    Max,
}

impl std::str::FromStr for Pick {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(Self::First),
            "last" => Ok(Self::Last),
            "max" => Ok(Self::Max),
            _ => Err(Error::validation(format!("unknown pick rule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Size,
    Power,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Size => "size",
            Self::Power => "power",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub family: Family,
    pub dists: Vec<ErrorDist>,
    pub psi: Vec<f64>,
    /// Ignored for [`Family::Mar01Ols`].
    pub phi: Vec<f64>,
    pub t_len: usize,
    pub replications: usize,
    pub burn: usize,
    pub size_quantile: f64,
    pub power_quantile: f64,
    pub seed: u64,
    pub pick: Pick,
    pub gcov: GcovOptions,
}

impl McConfig {
    /// MAR(0,1) by OLS over ψ = 0.1..0.9 and t(3), t(4), t(5).
    pub fn mar01(replications: usize, seed: u64) -> Self {
        Self {
            family: Family::Mar01Ols,
            dists: student_grid(),
            psi: unit_grid(),
            phi: Vec::new(),
            t_len: 400,
            replications,
            burn: DEFAULT_BURN,
            size_quantile: 0.975,
            power_quantile: 0.525,
            seed,
            pick: Pick::First,
            gcov: default_mc_gcov(),
        }
    }

    /// MAR(1,1) by GCov with K = 2 powers and H = 4.
    pub fn mar11(psi: Vec<f64>, phi: Vec<f64>, dists: Vec<ErrorDist>, replications: usize, seed: u64) -> Self {
        Self {
            family: Family::Mar11Gcov,
            dists,
            psi,
            phi,
            ..Self::mar01(replications, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::validation("at least one replication is required"));
        }
        if self.dists.is_empty() || self.psi.is_empty() {
            return Err(Error::validation("distribution and psi grids must be non-empty"));
        }
        if self.family == Family::Mar11Gcov && self.phi.is_empty() {
            return Err(Error::validation("phi grid must be non-empty for MAR(1,1)"));
        }
        for q in [self.size_quantile, self.power_quantile] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::validation(format!("quantile level {q} is outside (0, 1)")));
            }
        }
        if self.t_len < 20 {
            return Err(Error::validation("series length must be at least 20"));
        }
        for d in &self.dists {
            d.validate()?;
        }
        for c in self.cells() {
            c.model().validate()?;
        }
        self.gcov.config.validate()
    }

    /// Grid cells in table order: distribution, then ψ, then φ.
    pub fn cells(&self) -> Vec<CellSpec> {
        let phis: Vec<Option<f64>> = match self.family {
            Family::Mar01Ols => vec![None],
            Family::Mar11Gcov => self.phi.iter().copied().map(Some).collect(),
        };
        let mut out = Vec::new();
        for d in &self.dists {
            for &psi in &self.psi {
                for &phi in &phis {
                    out.push(CellSpec { dist: *d, psi, phi });
                }
            }
        }
        out
    }
}

fn default_mc_gcov() -> GcovOptions {
    GcovOptions::with_config(GcovConfig::new(TransformSpec::integer_powers(2), 4))
}

fn student_grid() -> Vec<ErrorDist> {
    [3.0, 4.0, 5.0]
        .into_iter()
        .map(|df| ErrorDist::StudentT { df })
        .collect()
}

fn unit_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub dist: ErrorDist,
    pub psi: f64,
    pub phi: Option<f64>,
}

impl CellSpec {
    pub fn model(&self) -> MarModel {
        match self.phi {
            None => MarModel::mar01(self.psi, self.dist),
            Some(phi) => MarModel::mar11(phi, self.psi, self.dist),
        }
    }

    fn warning(&self) -> Option<String> {
        let mut w = Vec::new();
        if self.psi == 0.0 {
            w.push("psi = 0 leaves the noncausal coefficient unidentified");
        }
        if self.phi == Some(0.0) {
            w.push("phi = 0 leaves the causal coefficient unidentified");
        }
        (!w.is_empty()).then(|| w.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub dist: ErrorDist,
    pub psi: f64,
    pub phi: Option<f64>,
    pub metric: Metric,
    /// Rejection frequency over valid replications; `None` if there were none.
    pub value: Option<f64>,
    pub rejections: usize,
    pub valid: usize,
    pub replications: usize,
    /// Replications whose fit failed.
    pub failures: usize,
    /// Replications without an admissible conditioning point.
    pub skipped: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTable {
    pub family: Family,
    pub metric: Metric,
    pub cells: Vec<McCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Failed,
    Tested { size: Option<bool>, power: Option<bool> },
}

/// Index of the exceedance used by the size experiment.
pub fn size_point(y: &[f64], level: f64, pick: Pick) -> Result<Option<usize>> {
    let q = empirical_quantile(y, level)?;
    let mut exc = (0..y.len().saturating_sub(1)).filter(|&t| y[t] > q);
    Ok(match pick {
        Pick::First => exc.next(),
        Pick::Last => exc.next_back(),
        Pick::Max => exc.max_by(|a, b| y[*a].total_cmp(&y[*b])),
    })
}

/// Index used by the power experiment: starting from the observation of
/// ascending rank ⌈level·T⌉, the first one upward whose successor is at most
/// the `upper` quantile and whose value is nonzero.
pub fn power_point(y: &[f64], level: f64, upper: f64) -> Result<Option<usize>> {
    let q = empirical_quantile(y, upper)?;
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|a, b| y[*a].total_cmp(&y[*b]).then(a.cmp(b)));
    let k = ((level * y.len() as f64).ceil() as usize).clamp(1, y.len());
    Ok(idx[k - 1..]
        .iter()
        .copied()
        .find(|&t| t + 1 < y.len() && y[t + 1] <= q && y[t] != 0.0))
}

fn replicate(cfg: &McConfig, cell: &CellSpec, cell_index: usize, rep: usize) -> Outcome {
    let stream = ((cell_index as u64) << 32) | rep as u64;
    let mut rng = stream_rng(cfg.seed, stream);
    let Ok(path) = simulate_path(&cell.model(), cfg.t_len, cfg.burn, &mut rng) else {
        return Outcome::Failed;
    };
    let y = path.y;
    let est = match cfg.family {
        Family::Mar01Ols => ols_noncausal(&y).map(|f| f.estimate()),
        Family::Mar11Gcov => gcov_estimate(&y, Order::MAR11, &cfg.gcov).map(|f| f.estimate()),
    };
    let Ok(est) = est else { return Outcome::Failed };
    let Ok(stats) = XiStats::new(&y, est) else {
        return Outcome::Failed;
    };
    let test = |t: Option<usize>| t.and_then(|t| stats.point(t, 0)).map(|p| p.rejected);
    let size = size_point(&y, cfg.size_quantile, cfg.pick).ok().flatten();
    let power = power_point(&y, cfg.power_quantile, cfg.size_quantile).ok().flatten();
    Outcome::Tested {
        size: test(size),
        power: test(power),
    }
}

/// Runs every cell and returns the size and power tables.
pub fn run(cfg: &McConfig) -> Result<(McTable, McTable)> {
    cfg.validate()?;
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<Outcome> = jobs.par_iter().map(|&(c, r)| replicate(cfg, &cells[c], c, r)).collect();
    let mut tables = [Metric::Size, Metric::Power].map(|metric| McTable {
        family: cfg.family,
        metric,
        cells: Vec::with_capacity(cells.len()),
    });
    for (c, spec) in cells.iter().enumerate() {
        let chunk = &outcomes[c * cfg.replications..(c + 1) * cfg.replications];
        for table in tables.iter_mut() {
            let metric = table.metric;
            let (mut rej, mut valid, mut failures, mut skipped) = (0, 0, 0, 0);
            for o in chunk {
                match o {
                    Outcome::Failed => failures += 1,
                    Outcome::Tested { size, power } => {
                        let d = if metric == Metric::Size { size } else { power };
                        match d {
                            Some(r) => {
                                valid += 1;
                                rej += usize::from(*r);
                            }
                            None => skipped += 1,
                        }
                    }
                }
            }
            table.cells.push(McCell {
                dist: spec.dist,
                psi: spec.psi,
                phi: spec.phi,
                metric,
                value: (valid > 0).then(|| rej as f64 / valid as f64),
                rejections: rej,
                valid,
                replications: cfg.replications,
                failures,
                skipped,
                warning: spec.warning(),
            });
        }
    }
    let [size, power] = tables;
    Ok((size, power))
}

pub fn run_size(cfg: &McConfig) -> Result<McTable> {
    run(cfg).map(|t| t.0)
}

pub fn run_power(cfg: &McConfig) -> Result<McTable> {
    run(cfg).map(|t| t.1)
}

impl McTable {
    pub fn cell(&self, dist: &ErrorDist, psi: f64, phi: Option<f64>) -> Option<&McCell> {
        self.cells
            .iter()
            .find(|c| c.dist == *dist && c.psi == psi && c.phi == phi)
    }

    /// CSV with columns `dist,psi,phi,metric,value,R,failures`; `failures`
    /// counts failed fits plus replications without a conditioning point.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io {
            path: "<mc csv>".into(),
            source: e.into(),
        };
        w.write_record(["dist", "psi", "phi", "metric", "value", "R", "failures"])
            .map_err(io)?;
        for c in &self.cells {
            w.write_record([
                c.dist.to_string(),
                c.psi.to_string(),
                c.phi.map(|p| p.to_string()).unwrap_or_default(),
                c.metric.as_str().to_string(),
                c.value.map(|v| format!("{v:.3}")).unwrap_or_default(),
                c.replications.to_string(),
                (c.failures + c.skipped).to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<mc csv>".into(),
            source: e,
        })
    }

    /// Aligned text: one row per distribution and one column per ψ (MAR(0,1))
    /// or per φ within a block for each ψ (MAR(1,1)).
    pub fn render_text(&self) -> String {
        let mut dists: Vec<ErrorDist> = Vec::new();
        let mut psis: Vec<f64> = Vec::new();
        let mut phis: Vec<Option<f64>> = Vec::new();
        for c in &self.cells {
            if !dists.contains(&c.dist) {
                dists.push(c.dist);
            }
            if !psis.contains(&c.psi) {
                psis.push(c.psi);
            }
            if !phis.contains(&c.phi) {
                phis.push(c.phi);
            }
        }
        let fmt = |v: Option<f64>| match v {
            Some(v) => format!("{v:.3}").trim_start_matches('0').to_string(),
            None => "NA".to_string(),
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Empirical {} ({} replications per cell)",
            self.metric.as_str(),
            self.cells.first().map_or(0, |c| c.replications)
        );
        match self.family {
            Family::Mar01Ols => {
                let _ = write!(out, "{:<14}", "psi");
                for p in &psis {
                    let _ = write!(out, "{p:>7}");
                }
                out.push('\n');
                for d in &dists {
                    let _ = write!(out, "{:<14}", d.to_string());
                    for p in &psis {
                        let _ = write!(out, "{:>7}", fmt(self.cell(d, *p, None).and_then(|c| c.value)));
                    }
                    out.push('\n');
                }
            }
            Family::Mar11Gcov => {
                for p in &psis {
                    let _ = writeln!(out, "psi = {p}");
                    let _ = write!(out, "{:<14}", "phi");
                    for f in phis.iter().flatten() {
                        let _ = write!(out, "{f:>7}");
                    }
                    out.push('\n');
                    for d in &dists {
                        let _ = write!(out, "{:<14}", d.to_string());
                        for f in &phis {
                            let _ = write!(out, "{:>7}", fmt(self.cell(d, *p, *f).and_then(|c| c.value)));
                        }
                        out.push('\n');
                    }
                }
            }
        }
        let failed: usize = self.cells.iter().map(|c| c.failures + c.skipped).sum();
        if failed > 0 {
            let _ = writeln!(out, "excluded replications: {failed}");
        }
        for c in self.cells.iter().filter(|c| c.warning.is_some()) {
            let _ = writeln!(
                out,
                "warning ({}, psi {}): {}",
                c.dist,
                c.psi,
                c.warning.as_deref().unwrap_or("")
            );
        }
        out
    }
}
