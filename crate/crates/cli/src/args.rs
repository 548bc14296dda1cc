use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use forkeffect::egarch::DummyLocation;
use forkeffect::events::{DatePolicy, RegressorKind};
use forkeffect::grouptests::Baseline;
use forkeffect::timeseries::ReturnMethod;

#[derive(Debug, Parser)]
#[command(name = "forkeffect", version, about = "Fork-event EGARCH studies from daily price CSVs")]
pub struct Cli {
    /// Flat `key=value` file; keys are long flag names, flags on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Descriptive statistics of the return series.
    Descriptive(DescriptiveArgs),
    /// Fit one EGARCH specification.
    Fit(FitArgs),
    /// Inspect the event calendar, its clusters and its regressors.
    Events(EventsArgs),
    /// Welch tests: two ad hoc samples, or the multiplicity and delay suites.
    Welch(WelchArgs),
    /// Simulate returns from given parameters.
    Simulate(SimulateArgs),
    /// Run the whole pipeline and write a manifest.
    Report(ReportArgs),
    /// Download daily closes into a price CSV.
    Fetch(FetchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Proxy {
    /// Conditional sigma of the index-adjusted fit without event regressors.
    #[default]
    Sigma,
    AbsReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum BaselineArg {
    #[default]
    Pooled,
    Branch,
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Pooled => Baseline::Pooled,
            BaselineArg::Branch => Baseline::Branch,
        }
    }
}

/// `--nu 5` or `--nu estimate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nu {
    Fixed(f64),
    Estimate,
}

impl FromStr for Nu {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "estimate" {
            return Ok(Nu::Estimate);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 2.0 && v.is_finite() => Ok(Nu::Fixed(v)),
            _ => Err(format!("expected a number above 2 or `estimate`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Asset prices (`date,close`) or returns (`date,return`).
    #[arg(long, value_name = "PATH")]
    pub asset: Option<PathBuf>,
    /// Market index prices or returns.
    #[arg(long, value_name = "PATH")]
    pub index: Option<PathBuf>,
    /// Return definition for price inputs: log or simple.
    #[arg(long = "returns", value_name = "METHOD", default_value = "log")]
    pub returns: ReturnMethod,
    /// First date kept (YYYY-MM-DD).
    #[arg(long, value_name = "DATE")]
    pub start: Option<NaiveDate>,
    /// Last date kept (YYYY-MM-DD).
    #[arg(long, value_name = "DATE")]
    pub end: Option<NaiveDate>,
}

#[derive(Debug, Clone, Args)]
pub struct CalendarArgs {
    /// Event calendar `date,name,ticker,kind`; the bundled fork table when omitted.
    #[arg(long, value_name = "PATH")]
    pub events: Option<PathBuf>,
    /// Keep only hard forks.
    #[arg(long)]
    pub hard_only: bool,
    /// Events on dates missing from the return axis: next-day or drop.
    #[arg(long, value_name = "POLICY", default_value = "next-day")]
    pub date_policy: DatePolicy,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// What goes to standard output.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct DescriptiveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub calendar: CalendarArgs,
    /// Equation carrying the event regressor: none, mean or variance.
    #[arg(long, value_name = "WHERE", default_value = "variance")]
    pub dummy_location: DummyLocation,
    /// Event regressor: dummy or count.
    #[arg(long, value_name = "KIND", default_value = "dummy")]
    pub regressor: RegressorKind,
    /// Include the index return in the mean (default when --index is given).
    #[arg(long, overrides_with = "no_index")]
    pub with_index: bool,
    #[arg(long, overrides_with = "with_index")]
    pub no_index: bool,
    /// Student-t degrees of freedom, or `estimate`.
    #[arg(long, value_name = "NU", default_value = "5")]
    pub nu: Nu,
    /// Optimizer starts from the deterministic grid (1 to 5).
    #[arg(long, value_name = "N", default_value_t = 5)]
    pub starts: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EventsArgs {
    #[command(flatten)]
    pub calendar: CalendarArgs,
    /// Calendar days within which a later event makes a cluster.
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub window: u32,
    /// Optional return axis to place the events on.
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct WelchArgs {
    /// First ad hoc sample, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, requires = "y")]
    pub x: Option<Vec<f64>>,
    /// Second ad hoc sample, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, requires = "x")]
    pub y: Option<Vec<f64>>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub calendar: CalendarArgs,
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub window: u32,
    /// Volatility measure compared across days.
    #[arg(long, value_enum, default_value_t = Proxy::Sigma)]
    pub proxy: Proxy,
    /// Day-t sample of the delay suite.
    #[arg(long, value_enum, default_value_t = BaselineArg::Pooled)]
    pub baseline: BaselineArg,
    /// Days after the event tested by the delay suite.
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub horizon: usize,
    #[arg(long, value_name = "NU", default_value = "5")]
    pub nu: Nu,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Number of returns.
    #[arg(long, short = 'T', value_name = "T", default_value_t = 5000)]
    pub horizon: usize,
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.001, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = -0.15, allow_negative_numbers = true)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.97, allow_negative_numbers = true)]
    pub beta: f64,
    /// Event coefficient in the log-variance equation.
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub delta_var: f64,
    /// Event coefficient in the mean equation.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub delta_mean: f64,
    /// Index coefficient in the mean equation.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub delta_index: f64,
    #[arg(long, default_value_t = 5.0)]
    pub nu: f64,
    #[arg(long, value_name = "WHERE", default_value = "variance")]
    pub dummy_location: DummyLocation,
    #[arg(long, value_name = "KIND", default_value = "dummy")]
    pub regressor: RegressorKind,
    /// One synthetic event every N days.
    #[arg(long, value_name = "N", default_value_t = 20)]
    pub event_every: usize,
    /// Index of the first synthetic event.
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub event_offset: usize,
    /// First date of the synthetic axis.
    #[arg(long, value_name = "DATE", default_value = "2015-01-01")]
    pub start: NaiveDate,
    /// Also draw Gaussian index returns and use them in the mean.
    #[arg(long)]
    pub with_index: bool,
    /// Standard deviation of the simulated index returns.
    #[arg(long, default_value_t = 0.03)]
    pub index_vol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Event calendar; the bundled fork table when omitted.
    #[arg(long, value_name = "PATH")]
    pub events: Option<PathBuf>,
    #[arg(long, value_name = "POLICY", default_value = "next-day")]
    pub date_policy: DatePolicy,
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub window: u32,
    #[arg(long, value_enum, default_value_t = Proxy::Sigma)]
    pub proxy: Proxy,
    #[arg(long, value_enum, default_value_t = BaselineArg::Pooled)]
    pub baseline: BaselineArg,
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub horizon: usize,
    #[arg(long, value_name = "NU", default_value = "5")]
    pub nu: Nu,
    #[arg(long, value_name = "N", default_value_t = 5)]
    pub starts: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FetchArgs {
    /// URL template with `{symbol}`, `{start}` and `{end}` placeholders.
    #[arg(long, value_name = "URL")]
    pub endpoint: String,
    #[arg(long)]
    pub symbol: String,
    #[arg(long, value_name = "DATE")]
    pub start: NaiveDate,
    #[arg(long, value_name = "DATE")]
    pub end: NaiveDate,
    /// Response cache directory.
    #[arg(long, value_name = "DIR", default_value = ".forkeffect-cache")]
    pub cache: PathBuf,
    /// Destination price CSV.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}
