use std::io::Write;
use std::path::{Path, PathBuf};

use forkeffect::egarch::{self, DummyLocation, ModelSpec, ParameterSet};
use forkeffect::estimation::{self, FitOptions, FitResult};
use forkeffect::events::{self, EventKind, EventRecord, EventRegressors, RegressorKind};
use forkeffect::grouptests::{self, Baseline};
use forkeffect::ingestion::{DateRange, FetchClient};
use forkeffect::ingestion;
use forkeffect::timeseries::{self, DescriptiveStats, ReturnSeries};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::args::*;
use crate::data::{self, Dataset};
use crate::exit::{code_for, Failure, ESTIMATION};

pub type Outcome = Result<(), Failure>;

/// A named artifact: file name and contents.
pub type Artifact = (String, Vec<u8>);

pub fn write_artifacts(dir: &Path, files: &[Artifact]) -> Result<Vec<PathBuf>, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    files
        .iter()
        .map(|(name, bytes)| {
            let path = dir.join(name);
            std::fs::write(&path, bytes)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}

fn emit(out: &mut dyn Write, s: &str) -> Outcome {
    out.write_all(s.as_bytes())
        .map_err(|e| Failure::input(format!("stdout: {e}")))
}

fn pretty(v: &impl serde::Serialize) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::input(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn spec_for(
    location: DummyLocation,
    regressor: RegressorKind,
    include_index: bool,
    nu: Nu,
) -> Result<ModelSpec, Failure> {
    let mut spec = ModelSpec::new(include_index, location).with_regressor(regressor);
    match nu {
        Nu::Fixed(v) => spec.nu = v,
        Nu::Estimate => spec.estimate_nu = true,
    }
    spec.validate()?;
    Ok(spec)
}

pub fn fit_options(starts: usize) -> Result<FitOptions, Failure> {
    if !(1..=estimation::START_GRID.len()).contains(&starts) {
        return Err(Failure::usage(format!(
            "--starts must be between 1 and {}",
            estimation::START_GRID.len()
        )));
    }
    Ok(FitOptions {
        starts,
        ..FitOptions::default()
    })
}

fn check_window(window: u32) -> Outcome {
    if window == 0 {
        return Err(Failure::usage("--window must be at least 1"));
    }
    Ok(())
}

fn column_name(path: &Path, fallback: &str) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| fallback.to_owned())
}

// ---------------------------------------------------------------- descriptive

pub fn descriptive_artifacts(data: &Dataset) -> Result<Vec<Artifact>, Failure> {
    let mut cols: Vec<(String, DescriptiveStats)> = Vec::new();
    for (role, path) in &data.inputs {
        let series = if role == "asset" {
            &data.asset
        } else {
            data.index.as_ref().expect("index input implies index series")
        };
        cols.push((column_name(path, role), timeseries::describe(&series.values)?));
    }
    let refs: Vec<(&str, &DescriptiveStats)> = cols.iter().map(|(n, s)| (n.as_str(), s)).collect();
    let json: Vec<_> = cols
        .iter()
        .map(|(n, s)| json!({ "series": n, "stats": s }))
        .collect();
    Ok(vec![
        ("descriptive.txt".into(), timeseries::render_descriptive(&refs).into_bytes()),
        ("descriptive.csv".into(), timeseries::descriptive_csv(&refs).into_bytes()),
        ("descriptive.json".into(), pretty(&json)?.into_bytes()),
    ])
}

fn pick(files: &[Artifact], format: Format) -> &[u8] {
    let ext = match format {
        Format::Text => ".txt",
        Format::Json => ".json",
        Format::Csv => ".csv",
    };
    files
        .iter()
        .find(|(n, _)| n.ends_with(ext))
        .map(|(_, b)| b.as_slice())
        .unwrap_or_default()
}

pub fn descriptive(a: &DescriptiveArgs, out: &mut dyn Write) -> Outcome {
    let data = data::load(&a.data)?;
    let files = descriptive_artifacts(&data)?;
    if let Some(dir) = &a.output.out {
        write_artifacts(dir, &files)?;
    }
    emit(out, &String::from_utf8_lossy(pick(&files, a.output.format)))
}

// ---------------------------------------------------------------- fit

fn hypotheses_text(fit: &FitResult) -> String {
    let Ok(outcomes) = estimation::test_hypotheses(fit) else {
        return String::new();
    };
    let mut s = String::from("\nHypothesis        coefficient    std. error     t value     p value  rejected at\n");
    for h in outcomes {
        let levels: Vec<String> = h.reject_at.iter().map(|l| format!("{}%", l * 100.0)).collect();
        s.push_str(&format!(
            "{:<14}{:>15.6}{:>14.6}{:>12.3}{:>12.4}  {}\n",
            h.name.as_str(),
            h.coefficient,
            h.std_error,
            h.t_value,
            h.p_value,
            if levels.is_empty() { "-".to_owned() } else { levels.join(", ") }
        ));
    }
    s
}

/// `<prefix>_<slug>.{json,txt,csv}`.
pub fn fit_artifacts(fit: &FitResult, prefix: &str) -> Result<Vec<Artifact>, Failure> {
    let stem = format!("{prefix}_{}", fit.spec.slug());
    let mut json = fit.to_json()?;
    json.push('\n');
    let text = estimation::render_fit_table(fit) + &hypotheses_text(fit);
    Ok(vec![
        (format!("{stem}.json"), json.into_bytes()),
        (format!("{stem}.txt"), text.into_bytes()),
        (format!("{stem}.csv"), estimation::fit_csv(fit).into_bytes()),
    ])
}

/// Diagnostics written when a fit fails inside the estimator.
pub fn diagnostics_artifact(spec: &ModelSpec, err: &forkeffect::Error, prefix: &str) -> Result<Artifact, Failure> {
    let failure = match err {
        forkeffect::Error::Estimation(f) => Some(f.as_ref()),
        _ => None,
    };
    let body = json!({
        "spec": spec,
        "error": err.to_string(),
        "failure": failure,
    });
    Ok((
        format!("{prefix}_{}_diagnostics.json", spec.slug()),
        pretty(&body)?.into_bytes(),
    ))
}

fn include_index(with: bool, without: bool, have_index: bool) -> Result<bool, Failure> {
    if without {
        return Ok(false);
    }
    if with && !have_index {
        return Err(Failure::usage("--with-index needs --index"));
    }
    Ok(have_index)
}

pub fn fit(a: &FitArgs, out: &mut dyn Write) -> Outcome {
    let spec = spec_for(
        a.dummy_location,
        a.regressor,
        include_index(a.with_index, a.no_index, a.data.index.is_some())?,
        a.nu,
    )?;
    let opts = fit_options(a.starts)?;
    let data = data::load(&a.data)?;
    let cal = data::calendar_from(&a.calendar)?;
    let regs = data::regressors(&cal, &data, a.calendar.date_policy)?;
    let md = data::model_data(&data, &spec, &regs)?;
    let dir = a.output.out.clone().unwrap_or_else(|| PathBuf::from("."));

    match estimation::fit_with(&md, &spec, &opts) {
        Ok(fit) => {
            let files = fit_artifacts(&fit, "fit")?;
            write_artifacts(&dir, &files)?;
            emit(out, &String::from_utf8_lossy(pick(&files, a.output.format)))
        }
        Err(e) if code_for(&e) == ESTIMATION => {
            let diag = diagnostics_artifact(&spec, &e, "fit")?;
            let paths = write_artifacts(&dir, &[diag])?;
            Err(Failure::new(
                ESTIMATION,
                format!("{e}; diagnostics in {}", paths[0].display()),
            ))
        }
        Err(e) => Err(e.into()),
    }
}

// ---------------------------------------------------------------- events

pub fn clusters_csv(labels: &[events::ClusterLabel]) -> String {
    let mut s = String::from("event_date,is_followed,same_day_count\n");
    for l in labels {
        s.push_str(&format!("{},{},{}\n", l.event_date, l.is_followed, l.same_day_count));
    }
    s
}

fn regressors_csv(regs: &EventRegressors) -> String {
    let mut s = String::from("date,dummy,count\n");
    for ((d, dummy), count) in regs
        .dates
        .iter()
        .zip(regs.values(RegressorKind::Dummy))
        .zip(regs.values(RegressorKind::Count))
    {
        s.push_str(&format!("{d},{dummy},{count}\n"));
    }
    s
}

fn calendar_csv(cal: &[EventRecord]) -> String {
    let mut s = String::from("date,name,ticker,kind\n");
    for e in cal {
        let quote = |v: &str| {
            if v.contains([',', '"']) {
                format!("\"{}\"", v.replace('"', "\"\""))
            } else {
                v.to_owned()
            }
        };
        s.push_str(&format!("{},{},{},{}\n", e.date, quote(&e.name), quote(&e.ticker), e.kind));
    }
    s
}

#[derive(Debug, serde::Serialize)]
struct CalendarSummary {
    events: usize,
    event_dates: usize,
    followed_dates: usize,
    /// Event dates with exactly 1, 2, 3 and 4 or more events.
    by_multiplicity: [usize; 4],
    attribution: Option<events::AttributionReport>,
}

fn summarize(cal: &[EventRecord], labels: &[events::ClusterLabel], attribution: Option<events::AttributionReport>) -> CalendarSummary {
    let mut by = [0usize; 4];
    for l in labels {
        by[(l.same_day_count.clamp(1, 4) - 1) as usize] += 1;
    }
    CalendarSummary {
        events: cal.len(),
        event_dates: labels.len(),
        followed_dates: labels.iter().filter(|l| l.is_followed).count(),
        by_multiplicity: by,
        attribution,
    }
}

fn summary_text(s: &CalendarSummary, window: u32) -> String {
    let mut t = format!(
        "events          {}\nevent dates     {}\nfollowed within {window} days: {}\n",
        s.events, s.event_dates, s.followed_dates
    );
    for (k, n) in s.by_multiplicity.iter().enumerate() {
        let label = if k == 3 { "4+".to_owned() } else { (k + 1).to_string() };
        t.push_str(&format!("dates with {label:<2} event(s): {n}\n"));
    }
    if let Some(a) = s.attribution {
        t.push_str(&format!(
            "on the return axis: {} attributed ({} shifted), {} dropped, {} outside the sample\n",
            a.attributed, a.shifted, a.dropped, a.off_range
        ));
    }
    t
}

pub fn events_cmd(a: &EventsArgs, out: &mut dyn Write) -> Outcome {
    check_window(a.window)?;
    let cal = data::calendar_from(&a.calendar)?;
    let mut files: Vec<Artifact> = Vec::new();
    let (placed, attribution) = if a.data.asset.is_some() {
        let data = data::load(&a.data)?;
        let (regs, report) = events::build_regressors(&cal, &data.asset.dates, a.calendar.date_policy)?;
        files.push(("regressors.csv".into(), regressors_csv(&regs).into_bytes()));
        let placed = events::align_calendar(&cal, &data.asset.dates, a.calendar.date_policy)?;
        (placed, Some(report))
    } else {
        (cal.clone(), None)
    };
    let labels = events::classify_clusters(&placed, a.window)?;
    let summary = summarize(&placed, &labels, attribution);
    let text = summary_text(&summary, a.window);
    let json = pretty(&json!({ "window": a.window, "summary": &summary, "clusters": &labels }))?;
    files.push(("calendar.csv".into(), calendar_csv(&placed).into_bytes()));
    files.push(("clusters.csv".into(), clusters_csv(&labels).into_bytes()));
    files.push(("events.txt".into(), text.clone().into_bytes()));
    files.push(("events.json".into(), json.clone().into_bytes()));
    if let Some(dir) = &a.output.out {
        write_artifacts(dir, &files)?;
    }
    emit(
        out,
        &match a.output.format {
            Format::Text => text,
            Format::Json => json,
            Format::Csv => clusters_csv(&labels),
        },
    )
}

// ---------------------------------------------------------------- welch

fn welch_pair_csv(r: &grouptests::WelchResult) -> String {
    format!(
        "difference,t_value,df,p_value,mean_1,mean_2,std_error_1,std_error_2,n_1,n_2\n{},{},{},{},{},{},{},{},{},{}\n",
        r.difference, r.t_value, r.df, r.p_value, r.mean_1, r.mean_2, r.std_error_1, r.std_error_2, r.n_1, r.n_2
    )
}

fn welch_pair_text(r: &grouptests::WelchResult) -> String {
    format!(
        "mean x       {:>12.6}  (n = {}, s.e. {:.6})\nmean y       {:>12.6}  (n = {}, s.e. {:.6})\ndifference   {:>12.6}\nt value      {:>12.4}\ndf           {:>12.4}\np value      {:>12.4}\n",
        r.mean_1, r.n_1, r.std_error_1, r.mean_2, r.n_2, r.std_error_2, r.difference, r.t_value, r.df, r.p_value
    )
}

/// Volatility proxy on the asset's date axis and, for `sigma`, the fit
/// that produced it.
pub fn volatility_proxy(
    data: &Dataset,
    proxy: Proxy,
    nu: Nu,
    opts: &FitOptions,
) -> Result<(Vec<f64>, Option<FitResult>), forkeffect::Error> {
    match proxy {
        Proxy::AbsReturn => Ok((data.asset.values.iter().map(|r| r.abs()).collect(), None)),
        Proxy::Sigma => {
            let spec = proxy_spec(data.index.is_some(), nu);
            let regs = EventRegressors::zeros(&data.asset.dates);
            let md = egarch::ModelData::new(&data.asset, data.index.as_ref(), &regs)?;
            let fit = estimation::fit_with(&md, &spec, opts)?;
            Ok((fit.sigma_path.sigma.clone(), Some(fit)))
        }
    }
}

pub fn proxy_spec(with_index: bool, nu: Nu) -> ModelSpec {
    let mut spec = ModelSpec::new(with_index, DummyLocation::None);
    match nu {
        Nu::Fixed(v) => spec.nu = v,
        Nu::Estimate => spec.estimate_nu = true,
    }
    spec
}

pub struct Suites {
    pub labels: Vec<events::ClusterLabel>,
    pub multiplicity: grouptests::MultiplicityReport,
    pub delayed: grouptests::DelayedEffectReport,
}

pub fn run_suites(
    dates: &[chrono::NaiveDate],
    vol: &[f64],
    placed: &[EventRecord],
    window: u32,
    horizon: usize,
    baseline: Baseline,
) -> Result<Suites, forkeffect::Error> {
    let labels = events::classify_clusters(placed, window)?;
    let multiplicity = grouptests::multiplicity_suite(dates, vol, &labels)?;
    let delayed = grouptests::delayed_effect_suite(dates, vol, &labels, horizon, baseline)?;
    Ok(Suites {
        labels,
        multiplicity,
        delayed,
    })
}

pub fn suite_artifacts(s: &Suites) -> Result<Vec<Artifact>, Failure> {
    Ok(vec![
        ("clusters.csv".into(), clusters_csv(&s.labels).into_bytes()),
        ("multiplicity.csv".into(), grouptests::multiplicity_csv(&s.multiplicity).into_bytes()),
        ("multiplicity.txt".into(), grouptests::render_multiplicity(&s.multiplicity).into_bytes()),
        ("multiplicity.json".into(), pretty(&s.multiplicity)?.into_bytes()),
        ("delayed_effect.csv".into(), grouptests::delayed_effect_csv(&s.delayed).into_bytes()),
        ("delayed_effect.txt".into(), grouptests::render_delayed_effect(&s.delayed).into_bytes()),
        ("delayed_effect.json".into(), pretty(&s.delayed)?.into_bytes()),
    ])
}

pub fn proxy_csv(dates: &[chrono::NaiveDate], vol: &[f64]) -> String {
    let mut s = String::from("date,volatility\n");
    for (d, v) in dates.iter().zip(vol) {
        s.push_str(&format!("{d},{v}\n"));
    }
    s
}

pub fn welch(a: &WelchArgs, out: &mut dyn Write) -> Outcome {
    if let (Some(x), Some(y)) = (&a.x, &a.y) {
        let r = grouptests::welch_test(x, y)?;
        let files: Vec<Artifact> = vec![
            ("welch.txt".into(), welch_pair_text(&r).into_bytes()),
            ("welch.csv".into(), welch_pair_csv(&r).into_bytes()),
            ("welch.json".into(), pretty(&r)?.into_bytes()),
        ];
        if let Some(dir) = &a.output.out {
            write_artifacts(dir, &files)?;
        }
        return emit(out, &String::from_utf8_lossy(pick(&files, a.output.format)));
    }

    check_window(a.window)?;
    if a.horizon == 0 {
        return Err(Failure::usage("--horizon must be at least 1"));
    }
    let data = data::load(&a.data)?;
    let cal = data::calendar_from(&a.calendar)?;
    let placed = events::align_calendar(&cal, &data.asset.dates, a.calendar.date_policy)?;
    let (vol, _) = volatility_proxy(&data, a.proxy, a.nu, &FitOptions::default())?;
    let suites = run_suites(&data.asset.dates, &vol, &placed, a.window, a.horizon, a.baseline.into())?;
    let mut files = suite_artifacts(&suites)?;
    files.push(("volatility_proxy.csv".into(), proxy_csv(&data.asset.dates, &vol).into_bytes()));
    if let Some(dir) = &a.output.out {
        write_artifacts(dir, &files)?;
    }
    let text = match a.output.format {
        Format::Text => format!(
            "{}\n{}",
            grouptests::render_multiplicity(&suites.multiplicity),
            grouptests::render_delayed_effect(&suites.delayed)
        ),
        Format::Json => pretty(&json!({
            "multiplicity": &suites.multiplicity,
            "delayed_effect": &suites.delayed,
        }))?,
        Format::Csv => format!(
            "{}\n{}",
            grouptests::multiplicity_csv(&suites.multiplicity),
            grouptests::delayed_effect_csv(&suites.delayed)
        ),
    };
    emit(out, &text)
}

// ---------------------------------------------------------------- simulate

/// Seed offset for the index stream so it never shares draws with the shocks.
const INDEX_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Outcome {
    if a.horizon == 0 {
        return Err(Failure::usage("--horizon must be at least 1"));
    }
    let mut spec = ModelSpec::new(a.with_index, a.dummy_location).with_regressor(a.regressor);
    spec.nu = a.nu;
    spec.validate()?;
    let params = ParameterSet {
        mu: a.mu,
        delta_fork_mean: Some(a.delta_mean),
        delta_crix: Some(a.delta_index),
        omega: a.omega,
        alpha: a.alpha,
        gamma: a.gamma,
        beta: a.beta,
        delta_fork_variance: Some(a.delta_var),
        nu: a.nu,
    }
    .conform(&spec);
    params.validate()?;
    if a.with_index && !(a.index_vol > 0.0 && a.index_vol.is_finite()) {
        return Err(Failure::usage("--index-vol must be positive"));
    }

    let dates = egarch::synthetic_dates(a.start, a.horizon);
    let regs = egarch::periodic_events(&dates, a.event_every, a.event_offset);
    let index = if a.with_index {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed ^ INDEX_STREAM);
        let normal = Normal::new(0.0, a.index_vol).map_err(|e| Failure::usage(e.to_string()))?;
        let values = (0..a.horizon).map(|_| normal.sample(&mut rng)).collect();
        Some(ReturnSeries::new(dates.clone(), values)?)
    } else {
        None
    };
    let sim = egarch::simulate(&params, &spec, &regs, index.as_ref(), a.horizon, a.seed)
        .map_err(|e| match e {
            forkeffect::Error::NonFinite { .. } => Failure::usage(format!("parameters diverge: {e}")),
            other => other.into(),
        })?;

    let calendar: Vec<EventRecord> = regs
        .dates
        .iter()
        .zip(regs.values(RegressorKind::Count))
        .filter(|(_, c)| *c > 0.0)
        .enumerate()
        .flat_map(|(k, (d, c))| {
            (0..c as usize).map(move |j| EventRecord {
                date: *d,
                name: format!("sim-{}-{}", k + 1, j + 1),
                ticker: "SIM".into(),
                kind: EventKind::Unknown,
            })
        })
        .collect();

    let series_csv = |column: &str, values: &[f64]| {
        let mut s = format!("date,{column}\n");
        for (d, v) in dates.iter().zip(values) {
            s.push_str(&format!("{d},{v}\n"));
        }
        s.into_bytes()
    };
    let truth = json!({
        "seed": a.seed,
        "horizon": a.horizon,
        "spec": spec,
        "params": params,
        "initial_log_var": sim.initial_log_var,
        "event_every": a.event_every,
        "event_offset": a.event_offset,
    });
    let mut files: Vec<Artifact> = vec![
        ("returns.csv".into(), series_csv("return", &sim.returns.values)),
        ("sigma.csv".into(), series_csv("sigma", &sim.path.sigma)),
        ("events.csv".into(), calendar_csv(&calendar).into_bytes()),
        ("truth.json".into(), pretty(&truth)?.into_bytes()),
    ];
    if let Some(ix) = &index {
        files.push(("index_returns.csv".into(), series_csv("return", &ix.values)));
    }
    let dir = a.output.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let paths = write_artifacts(&dir, &files)?;
    let text = match a.output.format {
        Format::Json => pretty(&truth)?,
        Format::Csv => String::from_utf8_lossy(&files[0].1).into_owned(),
        Format::Text => {
            let mut s = format!("simulated {} returns (seed {}), {} events\n", a.horizon, a.seed, calendar.len());
            for p in paths {
                s.push_str(&format!("wrote {}\n", p.display()));
            }
            s
        }
    };
    emit(out, &text)
}

// ---------------------------------------------------------------- fetch

pub fn fetch(a: &FetchArgs, out: &mut dyn Write) -> Outcome {
    let range = DateRange::new(a.start, a.end).map_err(|e| Failure::usage(e.to_string()))?;
    let client = FetchClient::http(&a.cache);
    let points = client.fetch_prices(&a.endpoint, &a.symbol, range)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Failure::input(format!("{}: {e}", parent.display())))?;
    }
    ingestion::write_prices(&a.out, &points)?;
    emit(
        out,
        &format!("wrote {} closes for {} to {}\n", points.len(), a.symbol, a.out.display()),
    )
}
