use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{SplineDetrend, TimeSeries};
use crate::error::{Error, Result};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Reads `date_col`/`value_col` from a headed CSV file; rows are sorted by date.
pub fn load_csv(path: impl AsRef<Path>, date_col: &str, value_col: &str) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, date_col, value_col, label)
}

pub fn read_csv<R: Read>(reader: R, date_col: &str, value_col: &str, label: impl Into<String>) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("column `{name}` not found in header")))
    };
    let di = column(date_col)?;
    let vi = column(value_col)?;

    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e)
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let date_text = record.get(di).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_text, DATE_FORMAT)
            .map_err(|e| parse_err(line, format!("bad date `{date_text}`: {e}")))?;
        let value_text = record.get(vi).unwrap_or("");
        let value: f64 = value_text
            .parse()
            .map_err(|_| parse_err(line, format!("bad value `{value_text}`")))?;
        if !value.is_finite() {
            return Err(parse_err(line, format!("non-finite value `{value_text}`")));
        }
        rows.push((date, value, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::validation(format!(
            "duplicate date {} (lines {} and {})",
            w[0].0, w[0].2, w[1].2
        )));
    }
    let (dates, values) = rows.into_iter().map(|(d, v, _)| (d, v)).unzip();
    TimeSeries::new(dates, values, label)
}

/// Writes `date,value` rows. Values use the shortest exactly round-tripping
/// decimal form.
pub fn write_csv<W: Write>(writer: W, ts: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "value"]).map_err(write_err)?;
    for (d, v) in ts.dates().iter().zip(ts.values()) {
        w.write_record([d.format(DATE_FORMAT).to_string(), v.to_string()])
            .map_err(write_err)?;
    }
    w.flush().map_err(|e| write_err(e.into()))?;
    Ok(())
}

/// Writes `date,value,trend,residual` rows for a detrending result.
pub fn write_detrend_csv<W: Write>(writer: W, original: &TimeSeries, fit: &SplineDetrend) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "value", "trend", "residual"])
        .map_err(write_err)?;
    for i in 0..original.len() {
        w.write_record([
            original.dates()[i].format(DATE_FORMAT).to_string(),
            original.values()[i].to_string(),
            fit.trend[i].to_string(),
            fit.residual.values()[i].to_string(),
        ])
        .map_err(write_err)?;
    }
    w.flush().map_err(|e| write_err(e.into()))?;
    Ok(())
}

fn parse_err(line: usize, e: impl ToString) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn write_err(e: csv::Error) -> Error {
    Error::Io {
        path: "<csv writer>".into(),
        source: std::io::Error::other(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows() {
        let text = "date,value\n2020-01-31,10.0\n2020-02-29,11.0\n";
        let ts = read_csv(text.as_bytes(), "date", "value", "t").unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts.values(), &[10.0, 11.0]);
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let text = "date,value\n2020-03-31,3\n2020-01-31,1\n2020-02-29,2\n";
        let ts = read_csv(text.as_bytes(), "date", "value", "t").unwrap();
        assert_eq!(ts.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn duplicate_date_is_validation_error() {
        let text = "date,value\n2020-01-31,1\n2020-01-31,2\n";
        let err = read_csv(text.as_bytes(), "date", "value", "t").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "date,value\n2020-01-31,1\n2020-02-29,abc\n";
        match read_csv(text.as_bytes(), "date", "value", "t").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let text = "date,value\n31/01/2020,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), "date", "value", "t").unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn custom_columns_and_missing_column() {
        let text = "Date,Close,Volume\n2020-01-31,5.5,100\n";
        let ts = read_csv(text.as_bytes(), "Date", "Close", "t").unwrap();
        assert_eq!(ts.values(), &[5.5]);
        assert!(read_csv(text.as_bytes(), "date", "value", "t").is_err());
    }

    #[test]
    fn write_then_read_round_trips_exactly() {
        let ts = TimeSeries::monthly_from(
            NaiveDate::from_ymd_opt(2001, 1, 31).unwrap(),
            vec![0.1 + 0.2, -1.0 / 3.0, 1e-300, 123456.789012345],
            "x",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &ts).unwrap();
        let back = read_csv(buf.as_slice(), "date", "value", "x").unwrap();
        assert_eq!(back, ts);
    }
}
