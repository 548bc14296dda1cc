//! Price-series ingestion: CSV parsing, validation, inner-join alignment.
//!
//! The on-disk format is a two-column CSV with header `date,close`, ISO dates
//! and `.` as the decimal separator. Closes are kept as `f64` in memory and
//! written back with the shortest decimal text that round-trips.

mod fetch;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fetch::{DateRange, FetchClient, HttpTransport, Transport};

pub(crate) const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub close: f64,
}

/// Closes for the primary asset and, optionally, a market index over a
/// shared date axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub dates: Vec<NaiveDate>,
    pub asset_close: Vec<f64>,
    pub index_close: Option<Vec<f64>>,
}

/// Dates discarded by [`align`] because they were missing on the other side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AlignReport {
    pub dropped_asset: usize,
    pub dropped_index: usize,
}

impl Panel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn asset_points(&self) -> Vec<PricePoint> {
        zip_points(&self.dates, &self.asset_close)
    }

    pub fn index_points(&self) -> Option<Vec<PricePoint>> {
        self.index_close
            .as_ref()
            .map(|closes| zip_points(&self.dates, closes))
    }

    /// Restrict the panel to `start..=end` (either bound optional).
    pub fn restrict(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Panel {
        let keep: Vec<usize> = self
            .dates
            .iter()
            .enumerate()
            .filter(|(_, d)| start.is_none_or(|s| **d >= s) && end.is_none_or(|e| **d <= e))
            .map(|(i, _)| i)
            .collect();
        Panel {
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            asset_close: keep.iter().map(|&i| self.asset_close[i]).collect(),
            index_close: self
                .index_close
                .as_ref()
                .map(|c| keep.iter().map(|&i| c[i]).collect()),
        }
    }
}

fn zip_points(dates: &[NaiveDate], closes: &[f64]) -> Vec<PricePoint> {
    dates
        .iter()
        .zip(closes)
        .map(|(&date, &close)| PricePoint { date, close })
        .collect()
}

pub fn read_prices(path: impl AsRef<Path>, source_label: &str) -> Result<Vec<PricePoint>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let points = parse_prices(file)?;
    log::debug!(
        "{source_label}: read {} prices from {}",
        points.len(),
        path.display()
    );
    Ok(points)
}

/// Parse a `date,close` CSV. The result is sorted by date; duplicate dates,
/// malformed rows and non-positive closes are rejected with the offending
/// line number.
pub fn parse_prices<R: Read>(reader: R) -> Result<Vec<PricePoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "close" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `date,close`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut rows: Vec<(u64, PricePoint)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let date = parse_date(&record[0]).ok_or_else(|| Error::Parse {
            line,
            msg: format!("malformed date `{}`", &record[0]),
        })?;
        let close: f64 = record[1].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("malformed price `{}`", &record[1]),
        })?;
        if !close.is_finite() {
            return Err(Error::Parse {
                line,
                msg: "non-finite price".into(),
            });
        }
        if close <= 0.0 {
            return Err(Error::Parse {
                line,
                msg: "non-positive price".into(),
            });
        }
        rows.push((line, PricePoint { date, close }));
    }

    rows.sort_by_key(|(_, p)| p.date);
    for pair in rows.windows(2) {
        if pair[0].1.date == pair[1].1.date {
            let line = pair[0].0.max(pair[1].0);
            return Err(Error::Parse {
                line,
                msg: format!("duplicate date {}", pair[1].1.date),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, p)| p).collect())
}

pub fn write_prices(path: impl AsRef<Path>, points: &[PricePoint]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_prices_to(&mut out, points).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_prices_to<W: Write>(out: &mut W, points: &[PricePoint]) -> std::io::Result<()> {
    out.write_all(b"date,close\n")?;
    for p in points {
        writeln!(out, "{},{}", p.date.format(DATE_FORMAT), p.close)?;
    }
    Ok(())
}

/// Inner-join the asset and (optional) index series on date.
pub fn align(asset: &[PricePoint], index: Option<&[PricePoint]>) -> Result<(Panel, AlignReport)> {
    if asset.is_empty() {
        return Err(Error::InvalidInput("asset series is empty".into()));
    }
    check_unique("asset", asset)?;

    let Some(index) = index else {
        let mut points = asset.to_vec();
        points.sort_by_key(|p| p.date);
        return Ok((
            Panel {
                dates: points.iter().map(|p| p.date).collect(),
                asset_close: points.iter().map(|p| p.close).collect(),
                index_close: None,
            },
            AlignReport::default(),
        ));
    };
    if index.is_empty() {
        return Err(Error::InvalidInput("index series is empty".into()));
    }
    check_unique("index", index)?;

    let index_by_date: BTreeMap<NaiveDate, f64> = index.iter().map(|p| (p.date, p.close)).collect();
    let mut joined: Vec<(NaiveDate, f64, f64)> = asset
        .iter()
        .filter_map(|p| index_by_date.get(&p.date).map(|&c| (p.date, p.close, c)))
        .collect();
    if joined.is_empty() {
        return Err(Error::InvalidInput(
            "empty intersection between asset and index dates".into(),
        ));
    }
    joined.sort_by_key(|(d, _, _)| *d);

    let report = AlignReport {
        dropped_asset: asset.len() - joined.len(),
        dropped_index: index.len() - joined.len(),
    };
    if report.dropped_asset + report.dropped_index > 0 {
        log::info!(
            "alignment dropped {} asset and {} index dates",
            report.dropped_asset,
            report.dropped_index
        );
    }
    Ok((
        Panel {
            dates: joined.iter().map(|r| r.0).collect(),
            asset_close: joined.iter().map(|r| r.1).collect(),
            index_close: Some(joined.iter().map(|r| r.2).collect()),
        },
        report,
    ))
}

fn check_unique(label: &str, points: &[PricePoint]) -> Result<()> {
    let mut seen = HashSet::with_capacity(points.len());
    for p in points {
        if !seen.insert(p.date) {
            return Err(Error::InvalidInput(format!(
                "{label} series has duplicate date {}",
                p.date
            )));
        }
    }
    Ok(())
}

pub(crate) fn parse_date(s: &str) -> Option<NaiveDate> {
    if s.len() != 10 {
        return None;
    }
    NaiveDate::parse_from_str(s, DATE_FORMAT).ok()
}

pub(crate) fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        msg: format!("malformed row: {e}"),
    }
}
