//! Welch comparisons of volatility across groups of fork days.

use std::collections::HashMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::two_sided_p;
use crate::events::ClusterLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub mean_1: f64,
    pub mean_2: f64,
    /// `mean_1 - mean_2`.
    pub difference: f64,
    /// Standard errors of the two means.
    pub std_error_1: f64,
    pub std_error_2: f64,
    pub t_value: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    pub p_value: f64,
    pub n_1: usize,
    pub n_2: usize,
}

/// Mean and (n - 1) variance; the mean is accumulated relative to the
/// first element so constant samples give their value exactly.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let x0 = xs[0];
    let m = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sample t-test without the equal-variance assumption; two-sided.
///
/// When both samples have zero variance and equal means the result is
/// `t = 0`, `p = 1` with `df = n1 + n2 - 2`.
pub fn welch_test(sample_1: &[f64], sample_2: &[f64]) -> Result<WelchResult> {
    let (n1, n2) = (sample_1.len(), sample_2.len());
    if n1 < 2 || n2 < 2 {
        return Err(Error::InvalidInput(format!(
            "Welch test needs at least 2 observations per sample (got {n1} and {n2})"
        )));
    }
    if sample_1.iter().chain(sample_2).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("Welch test samples contain non-finite values".into()));
    }
    let (m1, v1) = mean_var(sample_1);
    let (m2, v2) = mean_var(sample_2);
    let (a, b) = (v1 / n1 as f64, v2 / n2 as f64);
    let se = (a + b).sqrt();
    let difference = m1 - m2;

    let (t_value, df) = if se == 0.0 {
        if difference != 0.0 {
            return Err(Error::InvalidInput(
                "both samples are constant with different means; the t statistic is infinite".into(),
            ));
        }
        (0.0, (n1 + n2 - 2) as f64)
    } else {
        let df = (a + b).powi(2) / (a * a / (n1 - 1) as f64 + b * b / (n2 - 1) as f64);
        (difference / se, df)
    };
    Ok(WelchResult {
        mean_1: m1,
        mean_2: m2,
        difference,
        std_error_1: a.sqrt(),
        std_error_2: b.sqrt(),
        t_value,
        df,
        p_value: two_sided_p(t_value, df),
        n_1: n1,
        n_2: n2,
    })
}

/// Group mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub std_error: f64,
}

impl GroupSummary {
    fn of(xs: &[f64]) -> Option<Self> {
        if xs.len() < 2 {
            return None;
        }
        let (mean, var) = mean_var(xs);
        Some(Self {
            n: xs.len(),
            mean,
            std_error: (var / xs.len() as f64).sqrt(),
        })
    }
}

/// One pairwise comparison; `result` is `None` when a group is too small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub variable_1: String,
    pub variable_2: String,
    pub result: Option<WelchResult>,
    pub unavailable: Option<String>,
}

impl Comparison {
    fn run(variable_1: &str, x: &[f64], variable_2: &str, y: &[f64]) -> Self {
        let (result, unavailable) = match welch_test(x, y) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            variable_1: variable_1.into(),
            variable_2: variable_2.into(),
            result,
            unavailable,
        }
    }
}

/// Volatility values looked up by date.
struct DayIndex<'a> {
    vol: &'a [f64],
    pos: HashMap<NaiveDate, usize>,
}

impl<'a> DayIndex<'a> {
    fn new(dates: &[NaiveDate], vol: &'a [f64]) -> Result<Self> {
        if dates.len() != vol.len() {
            return Err(Error::InvalidInput(format!(
                "{} dates but {} volatility values",
                dates.len(),
                vol.len()
            )));
        }
        Ok(Self {
            vol,
            pos: dates.iter().enumerate().map(|(i, d)| (*d, i)).collect(),
        })
    }

    fn position(&self, d: NaiveDate) -> Option<usize> {
        self.pos.get(&d).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    /// One vs two, one vs three, two vs three, one vs multiple (two or more).
    pub comparisons: Vec<Comparison>,
    /// Event dates absent from the volatility axis.
    pub skipped_dates: usize,
}

/// Volatility on event days grouped by how many forks fell on the day.
pub fn multiplicity_suite(dates: &[NaiveDate], vol: &[f64], clusters: &[ClusterLabel]) -> Result<MultiplicityReport> {
    let index = DayIndex::new(dates, vol)?;
    let (mut one, mut two, mut three, mut multiple) = (vec![], vec![], vec![], vec![]);
    let mut skipped_dates = 0;
    for c in clusters {
        let Some(i) = index.position(c.event_date) else {
            skipped_dates += 1;
            continue;
        };
        let v = vol[i];
        match c.same_day_count {
            0 => {}
            1 => one.push(v),
            n => {
                multiple.push(v);
                if n == 2 {
                    two.push(v);
                } else if n == 3 {
                    three.push(v);
                }
            }
        }
    }
    Ok(MultiplicityReport {
        comparisons: vec![
            Comparison::run("One fork", &one, "Two forks", &two),
            Comparison::run("One fork", &one, "Three forks", &three),
            Comparison::run("Two forks", &two, "Three forks", &three),
            Comparison::run("One fork", &one, "Multiple forks", &multiple),
        ],
        skipped_dates,
    })
}

/// Which event days form the day-t sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// All event days, shared by both branches.
    #[default]
    Pooled,
    /// Only the event days of the branch being tested.
    Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagRow {
    pub lag: usize,
    pub summary: Option<GroupSummary>,
    /// Day t against day t + lag.
    pub test: Option<WelchResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayBranch {
    /// `no_subsequent` or `subsequent`.
    pub name: String,
    pub events: usize,
    pub event_day: Option<GroupSummary>,
    pub lags: Vec<LagRow>,
    pub unavailable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedEffectReport {
    pub horizon: usize,
    pub baseline: Baseline,
    pub branches: Vec<DelayBranch>,
    pub skipped_dates: usize,
}

/// Event-day volatility against the following `horizon` days, separately
/// for events with and without a later event inside the cluster window.
/// Day t + lag is `lag` steps along the date axis.
pub fn delayed_effect_suite(
    dates: &[NaiveDate],
    vol: &[f64],
    clusters: &[ClusterLabel],
    horizon: usize,
    baseline: Baseline,
) -> Result<DelayedEffectReport> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let index = DayIndex::new(dates, vol)?;
    let mut skipped_dates = 0;
    let mut positions: [Vec<usize>; 2] = [vec![], vec![]];
    for c in clusters {
        match index.position(c.event_date) {
            Some(i) => positions[usize::from(c.is_followed)].push(i),
            None => skipped_dates += 1,
        }
    }
    let all_days: Vec<f64> = positions.iter().flatten().map(|&i| vol[i]).collect();

    let branches = ["no_subsequent", "subsequent"]
        .iter()
        .zip(&positions)
        .map(|(name, pos)| {
            let own: Vec<f64> = pos.iter().map(|&i| index.vol[i]).collect();
            let day_t = match baseline {
                Baseline::Pooled => &all_days,
                Baseline::Branch => &own,
            };
            let event_day = GroupSummary::of(day_t);
            let lags = (1..=horizon)
                .map(|lag| {
                    let later: Vec<f64> = pos
                        .iter()
                        .filter_map(|&i| index.vol.get(i + lag).copied())
                        .collect();
                    LagRow {
                        lag,
                        summary: GroupSummary::of(&later),
                        test: welch_test(day_t, &later).ok(),
                    }
                })
                .collect();
            DelayBranch {
                name: (*name).into(),
                events: pos.len(),
                event_day,
                lags,
                unavailable: (pos.len() < 2).then(|| format!("{} events in branch", pos.len())),
            }
        })
        .collect();

    Ok(DelayedEffectReport {
        horizon,
        baseline,
        branches,
        skipped_dates,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns: test, variable_1, variable_2, difference, t_value, p_value,
/// then the supporting statistics.
pub fn multiplicity_csv(report: &MultiplicityReport) -> String {
    let mut s = String::from(
        "test,variable_1,variable_2,difference,t_value,p_value,df,mean_1,mean_2,n_1,n_2,status\n",
    );
    for (i, c) in report.comparisons.iter().enumerate() {
        let r = c.result.as_ref();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            c.variable_1,
            c.variable_2,
            cell(r.map(|r| r.difference)),
            cell(r.map(|r| r.t_value)),
            cell(r.map(|r| r.p_value)),
            cell(r.map(|r| r.df)),
            cell(r.map(|r| r.mean_1)),
            cell(r.map(|r| r.mean_2)),
            r.map(|r| r.n_1.to_string()).unwrap_or_default(),
            r.map(|r| r.n_2.to_string()).unwrap_or_default(),
            if r.is_some() { "ok" } else { "unavailable" }
        );
    }
    s
}

/// One row per day (t, t+1, ...), four columns per branch.
pub fn delayed_effect_csv(report: &DelayedEffectReport) -> String {
    let mut s = String::from("day");
    for b in &report.branches {
        for col in ["av_vol", "std_error", "t_value", "p_value"] {
            let _ = write!(s, ",{}_{col}", b.name);
        }
    }
    s.push('\n');
    s.push('t');
    for b in &report.branches {
        let _ = write!(
            s,
            ",{},{},,",
            cell(b.event_day.map(|g| g.mean)),
            cell(b.event_day.map(|g| g.std_error))
        );
    }
    s.push('\n');
    for lag in 1..=report.horizon {
        let _ = write!(s, "t+{lag}");
        for b in &report.branches {
            let row = b.lags.iter().find(|r| r.lag == lag);
            let g = row.and_then(|r| r.summary);
            let t = row.and_then(|r| r.test);
            let _ = write!(
                s,
                ",{},{},{},{}",
                cell(g.map(|g| g.mean)),
                cell(g.map(|g| g.std_error)),
                cell(t.map(|t| t.t_value)),
                cell(t.map(|t| t.p_value))
            );
        }
        s.push('\n');
    }
    s
}

/// Aligned rendering of the multiplicity comparisons.
pub fn render_multiplicity(report: &MultiplicityReport) -> String {
    let mut s = format!(
        "{:<6}{:<16}{:<16}{:>12}{:>10}{:>10}\n",
        "Test", "Variable 1", "Variable 2", "Difference", "t value", "p value"
    );
    for (i, c) in report.comparisons.iter().enumerate() {
        match &c.result {
            Some(r) => {
                let _ = writeln!(
                    s,
                    "{:<6}{:<16}{:<16}{:>12.4}{:>10.4}{:>10.4}",
                    i + 1,
                    c.variable_1,
                    c.variable_2,
                    r.difference,
                    r.t_value,
                    r.p_value
                );
            }
            None => {
                let _ = writeln!(s, "{:<6}{:<16}{:<16}{:>32}", i + 1, c.variable_1, c.variable_2, "unavailable");
            }
        }
    }
    s
}

/// Aligned rendering of the delayed-effect table.
pub fn render_delayed_effect(report: &DelayedEffectReport) -> String {
    let mut s = format!("{:<6}", "");
    for b in &report.branches {
        let _ = write!(s, "| {:<38}", b.name);
    }
    s.push('\n');
    let _ = write!(s, "{:<6}", "Day");
    for _ in &report.branches {
        let _ = write!(s, "| {:>9}{:>10}{:>10}{:>9}", "Av. vol.", "Std error", "t value", "p value");
    }
    s.push('\n');
    let fmt = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_default();
    let _ = write!(s, "{:<6}", "t");
    for b in &report.branches {
        let _ = write!(
            s,
            "| {:>9}{:>10}{:>10}{:>9}",
            fmt(b.event_day.map(|g| g.mean), 4),
            fmt(b.event_day.map(|g| g.std_error), 4),
            "",
            ""
        );
    }
    s.push('\n');
    for lag in 1..=report.horizon {
        let _ = write!(s, "{:<6}", format!("t+{lag}"));
        for b in &report.branches {
            let row = b.lags.iter().find(|r| r.lag == lag);
            let g = row.and_then(|r| r.summary);
            let t = row.and_then(|r| r.test);
            let _ = write!(
                s,
                "| {:>9}{:>10}{:>10}{:>9}",
                fmt(g.map(|g| g.mean), 4),
                fmt(g.map(|g| g.std_error), 4),
                fmt(t.map(|t| t.t_value), 4),
                fmt(t.map(|t| t.p_value), 4)
            );
        }
        s.push('\n');
    }
    s
}
