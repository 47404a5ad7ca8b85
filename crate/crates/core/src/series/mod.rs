//! Dated price series: loading, monthly resampling, spline detrending,
//! rolling variance and summary statistics.
//!
//! A [`TimeSeries`] always holds strictly increasing calendar dates and
//! finite values; every constructor enforces both.

mod csv_io;
mod detrend;
pub(crate) mod stats;

pub use csv_io::{load_csv, read_csv, write_csv, write_detrend_csv};
pub use detrend::{spline_detrend, SplineBoundary, SplineDetrend};
pub use stats::{rolling_variance, summary, SummaryStats};

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    label: String,
}

impl TimeSeries {
    /// Builds a series, checking that dates strictly increase and values are finite.
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::validation(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(if w[0] == w[1] {
                Error::validation(format!("duplicate date {}", w[0]))
            } else {
                Error::validation(format!("dates out of order: {} before {}", w[0], w[1]))
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite value at {}", dates[i])));
        }
        Ok(Self {
            dates,
            values,
            label: label.into(),
        })
    }

    /// Month-end dated series starting at `origin`; used for simulated paths.
    pub fn monthly_from(origin: NaiveDate, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let dates = (0..values.len())
            .map(|i| month_end_after(origin, i as u32))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::validation("date range overflow"))?;
        Self::new(dates, values, label)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same dates, new values (e.g. after rescaling); lengths must match.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.dates.clone(), values, self.label.clone())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Keeps the last available observation in every calendar month.
    ///
    /// A month inside the covered span with no observation at all is an
    /// error; gaps are never interpolated.
    pub fn resample_monthly_last(&self) -> Result<Self> {
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (d, v) in self.dates.iter().zip(&self.values) {
            match dates.last() {
                Some(last) if same_month(last, d) => {
                    *dates.last_mut().unwrap() = *d;
                    *values.last_mut().unwrap() = *v;
                }
                _ => {
                    dates.push(*d);
                    values.push(*v);
                }
            }
        }
        let missing: Vec<String> = dates
            .windows(2)
            .flat_map(|w| {
                let gap = month_index(&w[1]) - month_index(&w[0]);
                (1..gap).map(move |k| {
                    let m = month_index(&w[0]) + k;
                    format!("{:04}-{:02}", m.div_euclid(12), m.rem_euclid(12) + 1)
                })
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::validation(format!(
                "no observations in month(s) {}",
                missing.join(", ")
            )));
        }
        Self::new(dates, values, self.label.clone())
    }
}

pub fn resample_monthly_last(ts: &TimeSeries) -> Result<TimeSeries> {
    ts.resample_monthly_last()
}

fn same_month(a: &NaiveDate, b: &NaiveDate) -> bool {
    a.year() == b.year() && a.month() == b.month()
}

fn month_index(d: &NaiveDate) -> i64 {
    d.year() as i64 * 12 + d.month0() as i64
}

fn month_end_after(origin: NaiveDate, months: u32) -> Option<NaiveDate> {
    let first = origin.with_day(1)?.checked_add_months(Months::new(months + 1))?;
    first.pred_opt()
}
