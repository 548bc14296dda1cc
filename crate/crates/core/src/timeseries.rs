//! Returns and descriptive statistics.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{csv_error, parse_date, DATE_FORMAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnMethod {
    /// `ln(P(t) / P(t-1))`
    #[default]
    Log,
    /// `P(t) / P(t-1) - 1`
    Simple,
}

impl fmt::Display for ReturnMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReturnMethod::Log => "log",
            ReturnMethod::Simple => "simple",
        })
    }
}

impl FromStr for ReturnMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(ReturnMethod::Log),
            "simple" => Ok(ReturnMethod::Simple),
            other => Err(Error::InvalidInput(format!(
                "unknown return method `{other}` (expected log or simple)"
            ))),
        }
    }
}

/// Daily returns keyed by the date of the later price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "return",
                date: dates[i],
            });
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// A copy with `c` added to every value.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            dates: self.dates.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}

pub fn to_returns(dates: &[NaiveDate], prices: &[f64], method: ReturnMethod) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 prices to form returns, got {}",
            prices.len()
        )));
    }
    if dates.len() != prices.len() {
        return Err(Error::InvalidInput("dates and prices differ in length".into()));
    }
    if let Some(i) = prices.iter().position(|p| !(*p > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "non-positive price on {}",
            dates[i]
        )));
    }
    let values = prices
        .windows(2)
        .map(|w| match method {
            ReturnMethod::Log => (w[1] / w[0]).ln(),
            ReturnMethod::Simple => w[1] / w[0] - 1.0,
        })
        .collect();
    ReturnSeries::new(dates[1..].to_vec(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    /// Population-moment skewness `m3 / m2^1.5`.
    pub skewness: f64,
    /// Population-moment excess kurtosis `m4 / m2^2 - 3`.
    pub excess_kurtosis: f64,
    pub jarque_bera: f64,
    pub jb_p_value: f64,
}

pub fn describe(values: &[f64]) -> Result<DescriptiveStats> {
    let n = values.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "descriptive statistics need at least 4 observations, got {n}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std_dev = (m2 / (nf - 1.0)).sqrt();
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let (jarque_bera, jb_p_value) = jarque_bera(skewness, excess_kurtosis, n)?;
    Ok(DescriptiveStats {
        n,
        mean,
        std_dev,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        skewness,
        excess_kurtosis,
        jarque_bera,
        jb_p_value,
    })
}

/// Jarque-Bera statistic `n/6 (S^2 + K^2/4)` with `K` the excess kurtosis,
/// and its chi-square(2) upper-tail probability.
pub fn jarque_bera(skewness: f64, excess_kurtosis: f64, n: usize) -> Result<(f64, f64)> {
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "Jarque-Bera needs n >= 4, got {n}"
        )));
    }
    let stat = n as f64 / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    Ok((stat, chi2_2_sf(stat)))
}

/// Chi-square survival function with two degrees of freedom.
pub fn chi2_2_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        (-x / 2.0).exp()
    }
}

const TABLE_ROWS: [&str; 9] = [
    "Nb of Obs",
    "Mean",
    "Std Dev",
    "Minimum",
    "Maximum",
    "Skewness",
    "Kurtosis",
    "Jarque_Bera",
    "P-value",
];

fn table_cells(s: &DescriptiveStats) -> [String; 9] {
    [
        s.n.to_string(),
        format!("{:.6}", s.mean),
        format!("{:.6}", s.std_dev),
        format!("{:.6}", s.min),
        format!("{:.6}", s.max),
        format!("{:.6}", s.skewness),
        format!("{:.6}", s.excess_kurtosis),
        format!("{:.6}", s.jarque_bera),
        format!("{:.6}", s.jb_p_value),
    ]
}

/// Aligned text table, one column per series. Kurtosis is reported as excess.
pub fn render_descriptive(columns: &[(&str, &DescriptiveStats)]) -> String {
    let cells: Vec<[String; 9]> = columns.iter().map(|(_, s)| table_cells(s)).collect();
    let label_w = TABLE_ROWS.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = columns
        .iter()
        .zip(&cells)
        .map(|((name, _), col)| col.iter().map(String::len).chain([name.len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    out.push_str(&" ".repeat(label_w));
    for ((name, _), w) in columns.iter().zip(&widths) {
        out.push_str(&format!("  {name:>w$}"));
    }
    out.push('\n');
    for (row, label) in TABLE_ROWS.iter().enumerate() {
        out.push_str(&format!("{label:<label_w$}"));
        for (col, w) in cells.iter().zip(&widths) {
            out.push_str(&format!("  {:>w$}", col[row]));
        }
        out.push('\n');
    }
    out
}

/// Machine-readable form: `statistic,<name1>,<name2>...` with full precision.
pub fn descriptive_csv(columns: &[(&str, &DescriptiveStats)]) -> String {
    let mut out = String::from("statistic");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let keys = [
        "n",
        "mean",
        "std_dev",
        "min",
        "max",
        "skewness",
        "excess_kurtosis",
        "jarque_bera",
        "jb_p_value",
    ];
    for (row, key) in keys.iter().enumerate() {
        out.push_str(key);
        for (_, s) in columns {
            let v = match row {
                0 => s.n.to_string(),
                1 => s.mean.to_string(),
                2 => s.std_dev.to_string(),
                3 => s.min.to_string(),
                4 => s.max.to_string(),
                5 => s.skewness.to_string(),
                6 => s.excess_kurtosis.to_string(),
                7 => s.jarque_bera.to_string(),
                _ => s.jb_p_value.to_string(),
            };
            out.push(',');
            out.push_str(&v);
        }
        out.push('\n');
    }
    out
}

pub fn read_returns(path: impl AsRef<Path>) -> Result<ReturnSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_returns(file)
}

/// Parse a `date,return` CSV (the simulator's output format).
pub fn parse_returns<R: Read>(reader: R) -> Result<ReturnSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "return" {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header `date,return`".into(),
        });
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        let date = parse_date(&record[0]).ok_or_else(|| Error::Parse {
            line,
            msg: format!("malformed date `{}`", &record[0]),
        })?;
        let v: f64 = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                line,
                msg: "malformed return".into(),
            })?;
        dates.push(date);
        values.push(v);
    }
    ReturnSeries::new(dates, values)
}

pub fn write_series(
    path: impl AsRef<Path>,
    column: &str,
    dates: &[NaiveDate],
    values: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "date,{column}").map_err(io)?;
    for (d, v) in dates.iter().zip(values) {
        writeln!(out, "{},{}", d.format(DATE_FORMAT), v).map_err(io)?;
    }
    out.flush().map_err(io)
}
