//! Input loading shared by the subcommands.

use std::path::{Path, PathBuf};

use forkeffect::egarch::{ModelData, ModelSpec};
use forkeffect::events::{self, DatePolicy, EventRecord, EventRegressors};
use forkeffect::ingestion::{self, PricePoint};
use forkeffect::timeseries::{self, ReturnMethod, ReturnSeries};

use crate::args::{CalendarArgs, DataArgs};
use crate::exit::{at_path, Failure};

enum Input {
    Prices(Vec<PricePoint>),
    Returns(ReturnSeries),
}

/// Prices or returns, told apart by the header's second column.
fn read_input(path: &Path) -> Result<Input, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let header = text.lines().next().unwrap_or("").to_ascii_lowercase();
    let second = header.split(',').nth(1).map(str::trim).unwrap_or("");
    let parsed = if second == "return" {
        timeseries::parse_returns(text.as_bytes()).map(Input::Returns)
    } else {
        ingestion::parse_prices(text.as_bytes()).map(Input::Prices)
    };
    parsed.map_err(|e| at_path(path, e))
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub asset: ReturnSeries,
    pub index: Option<ReturnSeries>,
    /// Input files with the role they played.
    pub inputs: Vec<(String, PathBuf)>,
}

fn within(d: &chrono::NaiveDate, args: &DataArgs) -> bool {
    args.start.is_none_or(|s| *d >= s) && args.end.is_none_or(|e| *d <= e)
}

fn restrict_returns(s: ReturnSeries, args: &DataArgs) -> Result<ReturnSeries, Failure> {
    let (dates, values) = s
        .dates
        .iter()
        .zip(&s.values)
        .filter(|(d, _)| within(d, args))
        .map(|(d, v)| (*d, *v))
        .unzip();
    Ok(ReturnSeries::new(dates, values)?)
}

fn to_returns(points: &[PricePoint], method: ReturnMethod) -> Result<ReturnSeries, Failure> {
    let dates: Vec<_> = points.iter().map(|p| p.date).collect();
    let closes: Vec<_> = points.iter().map(|p| p.close).collect();
    Ok(timeseries::to_returns(&dates, &closes, method)?)
}

/// Dates common to both series.
fn intersect(a: &ReturnSeries, b: &ReturnSeries) -> Result<(ReturnSeries, ReturnSeries), Failure> {
    let (mut i, mut j) = (0, 0);
    let (mut da, mut va, mut vb) = (Vec::new(), Vec::new(), Vec::new());
    while i < a.len() && j < b.len() {
        match a.dates[i].cmp(&b.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                da.push(a.dates[i]);
                va.push(a.values[i]);
                vb.push(b.values[j]);
                i += 1;
                j += 1;
            }
        }
    }
    if da.len() < a.len() || da.len() < b.len() {
        log::info!(
            "aligned returns: {} common dates ({} asset-only, {} index-only dropped)",
            da.len(),
            a.len() - da.len(),
            b.len() - da.len()
        );
    }
    Ok((ReturnSeries::new(da.clone(), va)?, ReturnSeries::new(da, vb)?))
}

pub fn load(args: &DataArgs) -> Result<Dataset, Failure> {
    let asset_path = args
        .asset
        .as_ref()
        .ok_or_else(|| Failure::usage("--asset is required"))?;
    if let (Some(s), Some(e)) = (args.start, args.end) {
        if s > e {
            return Err(Failure::usage(format!("--start {s} is after --end {e}")));
        }
    }
    let mut inputs = vec![("asset".to_owned(), asset_path.clone())];
    let asset = read_input(asset_path)?;
    let index = match &args.index {
        Some(p) => {
            inputs.push(("index".to_owned(), p.clone()));
            Some(read_input(p)?)
        }
        None => None,
    };

    let (asset, index) = match (asset, index) {
        (Input::Prices(a), Some(Input::Prices(b))) => {
            let (panel, report) = ingestion::align(&a, Some(&b))?;
            if report.dropped_asset + report.dropped_index > 0 {
                log::info!(
                    "price alignment dropped {} asset and {} index dates",
                    report.dropped_asset,
                    report.dropped_index
                );
            }
            let panel = panel.restrict(args.start, args.end);
            let index_points = panel.index_points().unwrap_or_default();
            (
                to_returns(&panel.asset_points(), args.returns)?,
                Some(to_returns(&index_points, args.returns)?),
            )
        }
        (a, b) => {
            let one = |input: Input| -> Result<ReturnSeries, Failure> {
                match input {
                    Input::Returns(r) => restrict_returns(r, args),
                    Input::Prices(p) => {
                        let p: Vec<_> = p.into_iter().filter(|x| within(&x.date, args)).collect();
                        to_returns(&p, args.returns)
                    }
                }
            };
            let a = one(a)?;
            match b {
                Some(b) => {
                    let b = one(b)?;
                    let (a, b) = intersect(&a, &b)?;
                    (a, Some(b))
                }
                None => (a, None),
            }
        }
    };
    if asset.is_empty() {
        return Err(Failure::input(format!(
            "{}: no returns left after alignment and date filtering",
            asset_path.display()
        )));
    }
    Ok(Dataset {
        asset,
        index,
        inputs,
    })
}

/// The requested calendar: a file or the bundled table, hard forks only
/// when asked.
pub fn calendar(path: Option<&Path>, hard_only: bool) -> Result<Vec<EventRecord>, Failure> {
    Ok(match (path, hard_only) {
        (None, false) => events::all_forks(),
        (None, true) => events::hard_forks(),
        (Some(p), h) => {
            let cal = events::read_events(p).map_err(|e| at_path(p, e))?;
            if h {
                events::filter_hard(&cal)
            } else {
                cal
            }
        }
    })
}

pub fn calendar_from(args: &CalendarArgs) -> Result<Vec<EventRecord>, Failure> {
    calendar(args.events.as_deref(), args.hard_only)
}

pub fn regressors(
    calendar: &[EventRecord],
    data: &Dataset,
    policy: DatePolicy,
) -> Result<EventRegressors, Failure> {
    let (regs, report) = events::build_regressors(calendar, &data.asset.dates, policy)?;
    log::info!(
        "events: {} attributed ({} shifted), {} dropped, {} outside the sample",
        report.attributed,
        report.shifted,
        report.dropped,
        report.off_range
    );
    Ok(regs)
}

pub fn model_data(data: &Dataset, spec: &ModelSpec, regs: &EventRegressors) -> Result<ModelData, Failure> {
    let index = if spec.include_index {
        Some(
            data.index
                .as_ref()
                .ok_or_else(|| Failure::usage("the specification uses the index but --index was not given"))?,
        )
    } else {
        None
    };
    Ok(ModelData::new(&data.asset, index, regs)?)
}
