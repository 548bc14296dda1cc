//! HTTP price client with an on-disk CSV cache.
//!
//! Cache entries are keyed by (endpoint, symbol, range) and never expire, so a
//! rerun against a warm cache makes no network calls. Concurrent requests for
//! the same (endpoint, symbol) pair are serialized: the second caller waits and
//! then reads what the first one cached.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_date, read_prices, write_prices, PricePoint, DATE_FORMAT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidInput(format!(
                "date range start {start} is after end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// Something that can perform an HTTP GET and hand back the body.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<String>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<String> {
        let mut resp = ureq::get(url).call().map_err(|e| match e {
            ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
                Error::Network(format!("HTTP {code} from {url}"))
            }
            ureq::Error::StatusCode(code) => {
                Error::InvalidInput(format!("HTTP {code} from {url}"))
            }
            other => Error::Network(format!("{url}: {other}")),
        })?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| Error::Network(format!("{url}: {e}")))
    }
}

pub struct FetchClient<T = HttpTransport> {
    transport: T,
    cache_dir: PathBuf,
    in_flight: Mutex<HashSet<(String, String)>>,
    released: Condvar,
}

struct InFlightGuard<'a, T> {
    client: &'a FetchClient<T>,
    key: (String, String),
}

impl<T> Drop for InFlightGuard<'_, T> {
    fn drop(&mut self) {
        let mut set = self
            .client
            .in_flight
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        set.remove(&self.key);
        self.client.released.notify_all();
    }
}

impl FetchClient<HttpTransport> {
    pub fn http(cache_dir: impl Into<PathBuf>) -> Self {
        Self::new(HttpTransport, cache_dir)
    }
}

impl<T: Transport> FetchClient<T> {
    pub fn new(transport: T, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            transport,
            cache_dir: cache_dir.into(),
            in_flight: Mutex::new(HashSet::new()),
            released: Condvar::new(),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn cache_path(&self, endpoint: &str, symbol: &str, range: DateRange) -> PathBuf {
        let mut h = Sha256::new();
        h.update(endpoint.as_bytes());
        h.update([0]);
        h.update(symbol.as_bytes());
        h.update([0]);
        h.update(range.start.format(DATE_FORMAT).to_string().as_bytes());
        h.update([0]);
        h.update(range.end.format(DATE_FORMAT).to_string().as_bytes());
        let digest = hex::encode(h.finalize());
        let safe: String = symbol
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        self.cache_dir.join(format!(
            "{safe}_{}_{}_{}.csv",
            range.start.format("%Y%m%d"),
            range.end.format("%Y%m%d"),
            &digest[..16]
        ))
    }

    /// Fetch daily closes for `symbol` over `range`.
    ///
    /// `endpoint` is a URL template; `{symbol}`, `{start}` and `{end}` are
    /// substituted. The response must be a JSON array of
    /// `{"date": "YYYY-MM-DD", "close": <number>}` objects.
    pub fn fetch_prices(
        &self,
        endpoint: &str,
        symbol: &str,
        range: DateRange,
    ) -> Result<Vec<PricePoint>> {
        let cache = self.cache_path(endpoint, symbol, range);
        if cache.exists() {
            return read_prices(&cache, symbol);
        }

        let _guard = self.acquire(endpoint, symbol);
        // Another caller may have filled the cache while we waited.
        if cache.exists() {
            return read_prices(&cache, symbol);
        }

        let url = endpoint
            .replace("{symbol}", symbol)
            .replace("{start}", &range.start.format(DATE_FORMAT).to_string())
            .replace("{end}", &range.end.format(DATE_FORMAT).to_string());
        let body = self.transport.get(&url)?;
        let points = parse_payload(&body, range)?;

        write_cache(&cache, &points)?;
        Ok(points)
    }

    fn acquire(&self, endpoint: &str, symbol: &str) -> InFlightGuard<'_, T> {
        let key = (endpoint.to_owned(), symbol.to_owned());
        let mut set = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while set.contains(&key) {
            set = self
                .released
                .wait(set)
                .unwrap_or_else(|e| e.into_inner());
        }
        set.insert(key.clone());
        InFlightGuard { client: self, key }
    }
}

fn write_cache(path: &Path, points: &[PricePoint]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("csv.partial");
    write_prices(&tmp, points)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn parse_payload(body: &str, range: DateRange) -> Result<Vec<PricePoint>> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| Error::Schema(format!("response is not JSON: {e}")))?;
    let records = value
        .as_array()
        .ok_or_else(|| Error::Schema("response is not a JSON array".into()))?;

    let mut points = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let obj = rec
            .as_object()
            .ok_or_else(|| Error::Schema(format!("record {i} is not an object")))?;
        let date = obj
            .get("date")
            .ok_or_else(|| Error::Schema(format!("record {i}: missing field `date`")))?
            .as_str()
            .and_then(parse_date)
            .ok_or_else(|| Error::Schema(format!("record {i}: field `date` is not YYYY-MM-DD")))?;
        let close = obj
            .get("close")
            .ok_or_else(|| Error::Schema(format!("record {i}: missing field `close`")))?
            .as_f64()
            .ok_or_else(|| Error::Schema(format!("record {i}: field `close` is not a number")))?;
        if !(close > 0.0) || !close.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-positive price in record {i} ({date})"
            )));
        }
        if range.contains(date) {
            points.push(PricePoint { date, close });
        }
    }
    points.sort_by_key(|p| p.date);
    if let Some(pair) = points.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::InvalidInput(format!(
            "duplicate date {} in response",
            pair[0].date
        )));
    }
    Ok(points)
}
