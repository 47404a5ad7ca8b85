//! On-bubble diagnostics: the ξ̂ statistics, their delta-method bands, episode
//! dating and the forward conditional-probability estimator.
//!
//! For a MAR(1,1) fit
//!
//! ```text
//! ξ̂_t(h) = û_{t+h+1} v̂_{t+h} / y_t²
//! ```
//!
//! which stays near zero while y_t is large. MAR(0,1) uses v̂_{t+h}/y_t and
//! MAR(1,0) uses û_{t+h+1}/y_t. Positions are zero-based throughout.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::ParamEstimate;
use crate::series::{stats::summarize, TimeSeries};

/// Two-sided 5% normal critical value.
pub const CRITICAL: f64 = 1.96;
/// Points with |y_t| below this multiple of sd(y) are excluded.
pub const ZERO_GUARD: f64 = 1e-6;
pub const DEFAULT_THRESHOLD_Q: f64 = 0.975;
pub const DEFAULT_MIN_RUN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiPoint {
    pub t: usize,
    pub h: usize,
    pub xi: f64,
    pub sigma: f64,
    /// 1.96 σ̂/√n.
    pub band_halfwidth: f64,
    pub rejected: bool,
}

impl XiPoint {
    /// Table coding: 1 for not rejected, 0 for rejected.
    pub fn decision(&self) -> u8 {
        u8::from(!self.rejected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BubbleEpisode {
    pub start: usize,
    pub end: usize,
    pub peak: usize,
}

/// Statistics of one series under one fitted model.
#[derive(Debug, Clone)]
pub struct XiStats<'a> {
    y: &'a [f64],
    est: ParamEstimate,
    guard: f64,
}

impl<'a> XiStats<'a> {
    pub fn new(y: &'a [f64], est: ParamEstimate) -> Result<Self> {
        match (est.r, est.s) {
            (1, 1) | (0, 1) | (1, 0) => {}
            (r, s) => return Err(Error::Unsupported(format!("ξ statistics for MAR({r},{s})"))),
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("series contains non-finite values"));
        }
        let sd = if y.len() >= 2 { summarize(y)?.sd } else { 0.0 };
        Ok(Self {
            y,
            est,
            guard: ZERO_GUARD * sd,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn estimate(&self) -> &ParamEstimate {
        &self.est
    }

    /// Ratios (y_{t+h}/y_t, y_{t+h+1}/y_t), or `None` when the point is
    /// excluded or out of range.
    fn ratios(&self, t: usize, h: usize) -> Option<(f64, f64)> {
        let yt = *self.y.get(t)?;
        let y1 = *self.y.get(t + h + 1)?;
        if yt.abs() < self.guard || yt == 0.0 {
            return None;
        }
        Some((self.y[t + h] / yt, y1 / yt))
    }

    /// ξ̂ and the gradient (∂/∂φ, ∂/∂ψ) up to a common sign.
    fn xi_and_gradient(&self, t: usize, h: usize) -> Option<(f64, [f64; 2])> {
        let (r0, r1) = self.ratios(t, h)?;
        let (phi, psi) = (self.est.phi, self.est.psi);
        let u = r1 - phi * r0;
        let v = r0 - psi * r1;
        Some(match (self.est.r, self.est.s) {
            (1, 1) => (u * v, [r0 * v, r1 * u]),
            (0, 1) => (v, [0.0, r1]),
            _ => (u, [r0, 0.0]),
        })
    }

    pub fn xi(&self, t: usize, h: usize) -> Option<f64> {
        self.xi_and_gradient(t, h).map(|(x, _)| x)
    }

    /// σ̂ = √(gᵀ Ω̂ g).
    pub fn sigma(&self, t: usize, h: usize) -> Option<f64> {
        self.xi_and_gradient(t, h).map(|(_, g)| self.quad(g))
    }

    fn quad(&self, g: [f64; 2]) -> f64 {
        let o = &self.est.omega;
        let q = g[0] * g[0] * o[0][0] + 2.0 * g[0] * g[1] * o[0][1] + g[1] * g[1] * o[1][1];
        q.max(0.0).sqrt()
    }

    pub fn point(&self, t: usize, h: usize) -> Option<XiPoint> {
        let (xi, g) = self.xi_and_gradient(t, h)?;
        let sigma = self.quad(g);
        let band = CRITICAL * sigma / (self.est.n.max(1) as f64).sqrt();
        Some(XiPoint {
            t,
            h,
            xi,
            sigma,
            band_halfwidth: band,
            rejected: xi.abs() > band,
        })
    }

    /// Points at horizons 1..=max_h conditional on y_t. Horizons that run past
    /// the sample are dropped and flagged.
    pub fn diagnose(&self, t: usize, max_h: usize) -> Result<Diagnosis> {
        if t >= self.y.len() {
            return Err(Error::validation(format!("position {t} is outside the series")));
        }
        if self.y[t].abs() < self.guard || self.y[t] == 0.0 {
            return Err(Error::validation(format!("y at position {t} is numerically zero")));
        }
        let points: Vec<XiPoint> = (1..=max_h).map_while(|h| self.point(t, h)).collect();
        Ok(Diagnosis {
            t,
            truncated: points.len() < max_h,
            points,
        })
    }

    /// h = 0 points for every position that has one.
    pub fn points(&self) -> Vec<Option<XiPoint>> {
        (0..self.y.len().saturating_sub(1)).map(|t| self.point(t, 0)).collect()
    }

    /// Δξ̂_t(0) = ξ̂_t(0) − ξ̂_{t−1}(0) for t ≥ 1; gaps where either side is excluded.
    pub fn delta_xi(&self) -> Vec<Option<f64>> {
        let xi: Vec<Option<f64>> = (0..self.y.len().saturating_sub(1)).map(|t| self.xi(t, 0)).collect();
        xi.windows(2)
            .map(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            })
            .collect()
    }

    /// Dates episodes around exceedances of the empirical `threshold_q` quantile.
    ///
    /// Each exceedance is attached to the maximal run of consecutive
    /// non-rejected h = 0 points containing it (or its neighbour when the
    /// exceedance itself is rejected). Runs shorter than `min_run` are ignored,
    /// and two runs of at least `min_run` points separated by a single
    /// rejection are merged.
    pub fn detect_episodes(&self, threshold_q: f64, min_run: usize) -> Result<Vec<BubbleEpisode>> {
        let y = self.y;
        if y.len() < 20 {
            return Err(Error::validation("episode dating needs at least 20 observations"));
        }
        let q = empirical_quantile(y, threshold_q)?;
        let ok: Vec<bool> = self.points().iter().map(|p| p.is_some_and(|p| !p.rejected)).collect();
        let runs = merged_runs(&ok, min_run.max(1));
        let mut episodes: Vec<BubbleEpisode> = Vec::new();
        for t in (0..y.len()).filter(|&t| y[t] > q) {
            let run = [Some(t), Some(t + 1), t.checked_sub(1)]
                .into_iter()
                .flatten()
                .find_map(|s| runs.iter().find(|r| r.0 <= s && s <= r.1));
            let Some(&(start, end)) = run else { continue };
            if episodes.iter().any(|e| e.start == start && e.end == end) {
                continue;
            }
            let peak = (start..=end.min(y.len() - 1))
                .max_by(|a, b| y[*a].total_cmp(&y[*b]))
                .unwrap_or(start);
            episodes.push(BubbleEpisode { start, end, peak });
        }
        episodes.sort_by_key(|e| e.start);
        Ok(episodes)
    }
}

/// Maximal runs of `true` with length ≥ `min_run`, merged across single gaps.
fn merged_runs(ok: &[bool], min_run: usize) -> Vec<(usize, usize)> {
    let mut raw = Vec::new();
    let mut i = 0;
    while i < ok.len() {
        if ok[i] {
            let s = i;
            while i < ok.len() && ok[i] {
                i += 1;
            }
            raw.push((s, i - 1));
        } else {
            i += 1;
        }
    }
    let mut out: Vec<(usize, usize)> = Vec::new();
    for r in raw.into_iter().filter(|r| r.1 - r.0 + 1 >= min_run) {
        match out.last_mut() {
            Some(last) if r.0 == last.1 + 2 => last.1 = r.1,
            _ => out.push(r),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub t: usize,
    pub points: Vec<XiPoint>,
    pub truncated: bool,
}

/// Inverse empirical distribution: the smallest observation x with F̂(x) ≥ p.
pub fn empirical_quantile(x: &[f64], p: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::validation("quantile of an empty series"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::validation(format!("quantile level must lie in (0, 1), got {p}")));
    }
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let k = ((p * s.len() as f64).ceil() as usize).clamp(1, s.len());
    Ok(s[k - 1])
}

pub fn xi(y: &[f64], est: &ParamEstimate, t: usize, h: usize) -> Result<Option<f64>> {
    Ok(XiStats::new(y, *est)?.xi(t, h))
}

pub fn xi_sigma(y: &[f64], est: &ParamEstimate, t: usize, h: usize) -> Result<Option<f64>> {
    Ok(XiStats::new(y, *est)?.sigma(t, h))
}

pub fn diagnose(y: &[f64], est: &ParamEstimate, t: usize, max_h: usize) -> Result<Diagnosis> {
    XiStats::new(y, *est)?.diagnose(t, max_h)
}

pub fn delta_xi(y: &[f64], est: &ParamEstimate) -> Result<Vec<Option<f64>>> {
    if y.len() < 3 {
        return Err(Error::validation("Δξ needs at least 3 observations"));
    }
    Ok(XiStats::new(y, *est)?.delta_xi())
}

pub fn detect_episodes(y: &[f64], est: &ParamEstimate, threshold_q: f64, min_run: usize) -> Result<Vec<BubbleEpisode>> {
    XiStats::new(y, *est)?.detect_episodes(threshold_q, min_run)
}

/// Share of exceedances of the `threshold_q` quantile followed by a
/// non-decrease, #{y_t > q, y_{t+1} ≥ y_t} / #{y_t > q}, over t < T − 1.
/// `None` when nothing exceeds the threshold.
pub fn forward_conditional_prob(y: &[f64], threshold_q: f64) -> Result<Option<f64>> {
    let q = empirical_quantile(y, threshold_q)?;
    let (mut hits, mut total) = (0usize, 0usize);
    for w in y.windows(2) {
        if w[0] > q {
            total += 1;
            if w[1] / w[0] >= 1.0 {
                hits += 1;
            }
        }
    }
    Ok((total > 0).then(|| hits as f64 / total as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub t: usize,
    pub date: NaiveDate,
    pub xi: f64,
    pub sigma: f64,
    pub band: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub start: usize,
    pub end: usize,
    pub peak: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub peak_date: NaiveDate,
    pub threshold_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub threshold_q: f64,
    pub threshold: f64,
    pub min_run: usize,
    pub estimate: ParamEstimate,
    pub points: Vec<PointRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub forward_prob: Option<f64>,
}

impl DetectionReport {
    pub fn build(ts: &TimeSeries, est: &ParamEstimate, threshold_q: f64, min_run: usize) -> Result<Self> {
        let y = ts.values();
        let stats = XiStats::new(y, *est)?;
        let dates = ts.dates();
        let points = stats
            .points()
            .into_iter()
            .flatten()
            .map(|p| PointRecord {
                t: p.t,
                date: dates[p.t],
                xi: p.xi,
                sigma: p.sigma,
                band: p.band_halfwidth,
                rejected: p.rejected,
            })
            .collect();
        let episodes = stats
            .detect_episodes(threshold_q, min_run)?
            .into_iter()
            .map(|e| EpisodeRecord {
                start: e.start,
                end: e.end,
                peak: e.peak,
                start_date: dates[e.start],
                end_date: dates[e.end],
                peak_date: dates[e.peak],
                threshold_q,
            })
            .collect();
        Ok(Self {
            threshold_q,
            threshold: empirical_quantile(y, threshold_q)?,
            min_run,
            estimate: *est,
            points,
            episodes,
            forward_prob: forward_conditional_prob(y, threshold_q)?,
        })
    }

    /// Plot-ready rows `date,y,xi,band_lo,band_hi,in_episode`; the band is
    /// centred on zero and excluded points leave xi and the band empty.
    pub fn write_csv<W: Write>(&self, writer: W, ts: &TimeSeries) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io {
            path: "<detection csv>".into(),
            source: e.into(),
        };
        w.write_record(["date", "y", "xi", "band_lo", "band_hi", "in_episode"])
            .map_err(io)?;
        let mut by_t = vec![None; ts.len()];
        for p in &self.points {
            by_t[p.t] = Some(p);
        }
        for (t, (d, y)) in ts.dates().iter().zip(ts.values()).enumerate() {
            let inside = self.episodes.iter().any(|e| e.start <= t && t <= e.end);
            let (xi, lo, hi) = match by_t[t] {
                Some(p) => (p.xi.to_string(), (-p.band).to_string(), p.band.to_string()),
                None => (String::new(), String::new(), String::new()),
            };
            w.write_record([d.to_string(), y.to_string(), xi, lo, hi, u8::from(inside).to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<detection csv>".into(),
            source: e,
        })
    }
}
