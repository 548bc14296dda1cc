//! Event calendar: fork records, the D(t)/C(t) regressors derived from them,
//! and cluster labels for the compound/delay comparisons.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{csv_error, parse_date, DATE_FORMAT};

/// Table of every bitcoin fork in the study, `date,name,ticker,kind`.
pub const ALL_FORKS_CSV: &str = include_str!("../fixtures/forks_all.csv");
/// The 22 hard forks used for the robustness refits.
pub const HARD_FORKS_CSV: &str = include_str!("../fixtures/forks_hard.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Hard,
    Soft,
    Unknown,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Hard => "hard",
            EventKind::Soft => "soft",
            EventKind::Unknown => "unknown",
        })
    }
}

impl FromStr for EventKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(EventKind::Hard),
            "soft" => Ok(EventKind::Soft),
            "unknown" => Ok(EventKind::Unknown),
            other => Err(Error::InvalidInput(format!(
                "unknown event kind `{other}` (expected hard, soft or unknown)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub name: String,
    pub ticker: String,
    pub kind: EventKind,
}

/// What to do with an event whose date is not on the return axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatePolicy {
    Drop,
    /// Attribute the event to the next date present on the axis.
    #[default]
    NextDay,
}

impl FromStr for DatePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(DatePolicy::Drop),
            "next_day" | "next-day" => Ok(DatePolicy::NextDay),
            other => Err(Error::InvalidInput(format!("unknown date policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    /// D(t): 1 on any event day.
    #[default]
    Dummy,
    /// C(t): number of events on the day.
    Count,
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegressorKind::Dummy => "dummy",
            RegressorKind::Count => "count",
        })
    }
}

impl FromStr for RegressorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dummy" => Ok(RegressorKind::Dummy),
            "count" => Ok(RegressorKind::Count),
            other => Err(Error::InvalidInput(format!("unknown regressor kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRegressors {
    pub dates: Vec<NaiveDate>,
    pub dummy: Vec<u8>,
    pub count: Vec<u32>,
}

impl EventRegressors {
    pub fn zeros(dates: &[NaiveDate]) -> Self {
        Self {
            dates: dates.to_vec(),
            dummy: vec![0; dates.len()],
            count: vec![0; dates.len()],
        }
    }

    /// Build from per-day counts; the dummy is derived.
    pub fn from_counts(dates: &[NaiveDate], count: Vec<u32>) -> Result<Self> {
        if dates.len() != count.len() {
            return Err(Error::InvalidInput("counts and dates differ in length".into()));
        }
        Ok(Self {
            dates: dates.to_vec(),
            dummy: count.iter().map(|&c| u8::from(c > 0)).collect(),
            count,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn values(&self, kind: RegressorKind) -> Vec<f64> {
        match kind {
            RegressorKind::Dummy => self.dummy.iter().map(|&d| f64::from(d)).collect(),
            RegressorKind::Count => self.count.iter().map(|&c| f64::from(c)).collect(),
        }
    }

    pub fn event_days(&self) -> usize {
        self.dummy.iter().filter(|&&d| d == 1).count()
    }
}

/// Where each calendar entry ended up when mapped onto a date axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionReport {
    /// Events counted on some axis date (including shifted ones).
    pub attributed: usize,
    /// Events moved forward to the next axis date.
    pub shifted: usize,
    /// Inside the axis range but on a missing date, under the drop policy.
    pub dropped: usize,
    /// Before the first or after the last axis date.
    pub off_range: usize,
}

/// Map each event onto an index of `dates`, following `policy`.
pub fn attribute<'a>(
    calendar: &'a [EventRecord],
    dates: &[NaiveDate],
    policy: DatePolicy,
) -> Result<(Vec<(usize, &'a EventRecord)>, AttributionReport)> {
    if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "date axis not strictly increasing at {}",
            w[1]
        )));
    }
    let mut report = AttributionReport::default();
    let mut placed = Vec::with_capacity(calendar.len());
    let (Some(&first), Some(&last)) = (dates.first(), dates.last()) else {
        report.off_range = calendar.len();
        return Ok((placed, report));
    };

    for ev in calendar {
        if ev.date < first || ev.date > last {
            report.off_range += 1;
            continue;
        }
        let pos = dates.partition_point(|d| *d < ev.date);
        if dates[pos] == ev.date {
            placed.push((pos, ev));
            report.attributed += 1;
        } else {
            match policy {
                DatePolicy::Drop => report.dropped += 1,
                DatePolicy::NextDay => {
                    placed.push((pos, ev));
                    report.attributed += 1;
                    report.shifted += 1;
                }
            }
        }
    }
    if report.dropped > 0 {
        log::warn!("{} events on dates missing from the sample dropped", report.dropped);
    }
    if report.off_range > 0 {
        log::info!("{} events outside the sample period", report.off_range);
    }
    Ok((placed, report))
}

pub fn build_regressors(
    calendar: &[EventRecord],
    dates: &[NaiveDate],
    policy: DatePolicy,
) -> Result<(EventRegressors, AttributionReport)> {
    let (placed, report) = attribute(calendar, dates, policy)?;
    let mut count = vec![0u32; dates.len()];
    for (i, _) in placed {
        count[i] += 1;
    }
    Ok((EventRegressors::from_counts(dates, count)?, report))
}

/// The calendar re-dated onto the axis (shifted or dropped per `policy`).
pub fn align_calendar(
    calendar: &[EventRecord],
    dates: &[NaiveDate],
    policy: DatePolicy,
) -> Result<Vec<EventRecord>> {
    let (placed, _) = attribute(calendar, dates, policy)?;
    Ok(placed
        .into_iter()
        .map(|(i, ev)| EventRecord {
            date: dates[i],
            ..ev.clone()
        })
        .collect())
}

pub fn filter_hard(calendar: &[EventRecord]) -> Vec<EventRecord> {
    calendar
        .iter()
        .filter(|e| e.kind == EventKind::Hard)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabel {
    pub event_date: NaiveDate,
    /// Another event date falls within `window_days` after this one.
    pub is_followed: bool,
    pub same_day_count: u32,
}

pub fn classify_clusters(calendar: &[EventRecord], window_days: u32) -> Result<Vec<ClusterLabel>> {
    if window_days == 0 {
        return Err(Error::InvalidInput("cluster window must be at least 1 day".into()));
    }
    let mut per_day: BTreeMap<NaiveDate, u32> = BTreeMap::new();
    for ev in calendar {
        *per_day.entry(ev.date).or_default() += 1;
    }
    let days: Vec<NaiveDate> = per_day.keys().copied().collect();
    Ok(per_day
        .iter()
        .enumerate()
        .map(|(i, (&d, &n))| ClusterLabel {
            event_date: d,
            is_followed: days
                .get(i + 1)
                .is_some_and(|next| (*next - d).num_days() <= i64::from(window_days)),
            same_day_count: n,
        })
        .collect())
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_events(file)
}

/// Parse a `date,name,ticker,kind` CSV, sorted by date (stable).
pub fn parse_events<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let expected = ["date", "name", "ticker", "kind"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header `date,name,ticker,kind`".into(),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        let date = parse_date(&record[0]).ok_or_else(|| Error::Parse {
            line,
            msg: format!("malformed date `{}`", &record[0]),
        })?;
        let kind = record[3].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("unknown event kind `{}`", &record[3]),
        })?;
        out.push(EventRecord {
            date,
            name: record[1].to_owned(),
            ticker: record[2].to_owned(),
            kind,
        });
    }
    out.sort_by_key(|e| e.date);
    Ok(out)
}

pub fn write_events(path: impl AsRef<Path>, calendar: &[EventRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "date,name,ticker,kind").map_err(io)?;
    for e in calendar {
        writeln!(
            out,
            "{},{},{},{}",
            e.date.format(DATE_FORMAT),
            e.name,
            e.ticker,
            e.kind
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn all_forks() -> Vec<EventRecord> {
    parse_events(ALL_FORKS_CSV.as_bytes()).expect("bundled fork table parses")
}

pub fn hard_forks() -> Vec<EventRecord> {
    parse_events(HARD_FORKS_CSV.as_bytes()).expect("bundled hard-fork table parses")
}
