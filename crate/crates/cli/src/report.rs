//! The full pipeline: every stage writes its own files, failures are
//! recorded in the manifest and do not stop later stages.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use forkeffect::egarch::{DummyLocation, ModelSpec};
use forkeffect::estimation::{self, FitOptions, FitResult};
use forkeffect::events::{self, EventRecord, RegressorKind};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::{Nu, Proxy, ReportArgs};
use crate::commands::{self, Artifact, Outcome};
use crate::data::{self, Dataset};
use crate::exit::{Failure, PARTIAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub status: Status,
    pub message: Option<String>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Checksum {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub settings: BTreeMap<&'static str, String>,
    pub inputs: Vec<Checksum>,
    pub stages: Vec<Stage>,
    pub artifacts: Vec<Checksum>,
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects stage outcomes and their files in pipeline order.
#[derive(Default)]
struct Bundle {
    stages: Vec<Stage>,
    files: Vec<Artifact>,
}

impl Bundle {
    fn record(&mut self, name: &str, outcome: Result<Vec<Artifact>, String>) {
        let (status, message, files) = match outcome {
            Ok(files) => (Status::Ok, None, files),
            Err(msg) => {
                log::warn!("stage {name} failed: {msg}");
                (Status::Failed, Some(msg), Vec::new())
            }
        };
        self.push(name, status, message, files);
    }

    fn push(&mut self, name: &str, status: Status, message: Option<String>, files: Vec<Artifact>) {
        self.stages.push(Stage {
            name: name.to_owned(),
            status,
            message,
            artifacts: files.iter().map(|(n, _)| n.clone()).collect(),
        });
        self.files.extend(files);
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.push(name, Status::Skipped, Some(why.to_owned()), Vec::new());
    }

    fn failed(&self) -> Vec<&str> {
        self.stages
            .iter()
            .filter(|s| s.status == Status::Failed)
            .map(|s| s.name.as_str())
            .collect()
    }
}

struct Job<'a> {
    stage: String,
    prefix: &'static str,
    spec: ModelSpec,
    calendar: &'a [EventRecord],
}

fn run_job(job: &Job, data: &Dataset, a: &ReportArgs, opts: &FitOptions) -> Result<FitResult, forkeffect::Error> {
    let (regs, _) = events::build_regressors(job.calendar, &data.asset.dates, a.date_policy)?;
    let md = forkeffect::egarch::ModelData::new(
        &data.asset,
        data.index.as_ref().filter(|_| job.spec.include_index),
        &regs,
    )?;
    estimation::fit_with(&md, &job.spec, opts)
}

fn spec(location: DummyLocation, kind: RegressorKind, with_index: bool, nu: Nu) -> ModelSpec {
    let mut s = commands::proxy_spec(with_index, nu);
    s.dummy_location = location;
    s.regressor_kind = kind;
    s
}

fn ic_artifacts(dummy: &FitResult, count: &FitResult) -> Result<Vec<Artifact>, String> {
    let prefer = estimation::ic_preference(&dummy.ic, &count.ic);
    let mut csv = String::from("criterion,dummy,count,preferred\n");
    let mut txt = format!("{:<14}{:>14}{:>14}  preferred\n", "Criterion", "D(t)", "C(t)");
    let mut rows = Vec::new();
    for (((name, d), c), p) in estimation::InformationCriteria::NAMES
        .iter()
        .zip(dummy.ic.values())
        .zip(count.ic.values())
        .zip(prefer)
    {
        let which = if d == c {
            "tie"
        } else if p {
            "dummy"
        } else {
            "count"
        };
        csv.push_str(&format!("{name},{d},{c},{which}\n"));
        txt.push_str(&format!("{name:<14}{d:>14.6}{c:>14.6}  {which}\n"));
        rows.push(serde_json::json!({ "criterion": name, "dummy": d, "count": c, "preferred": which }));
    }
    let wins = prefer.iter().filter(|p| **p).count();
    txt.push_str(&format!("D(t) preferred by {wins} of 4 criteria\n"));
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "dummy_spec": dummy.spec.slug(),
        "count_spec": count.spec.slug(),
        "criteria": rows,
        "dummy_preferred": wins,
    }))
    .map_err(|e| e.to_string())?
        + "\n";
    Ok(vec![
        ("ic_comparison.csv".into(), csv.into_bytes()),
        ("ic_comparison.txt".into(), txt.into_bytes()),
        ("ic_comparison.json".into(), json.into_bytes()),
    ])
}

fn hypotheses_csv(fits: &[&FitResult]) -> String {
    let mut s = String::from("spec,hypothesis,coefficient,std_error,t_value,p_value,reject_10,reject_5,reject_1\n");
    for fit in fits {
        let Ok(outcomes) = estimation::test_hypotheses(fit) else {
            continue;
        };
        for h in outcomes {
            let r: Vec<String> = estimation::SIGNIFICANCE_LEVELS
                .iter()
                .map(|l| h.rejects_at(*l).to_string())
                .collect();
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fit.spec.slug(),
                h.name.as_str(),
                h.coefficient,
                h.std_error,
                h.t_value,
                h.p_value,
                r.join(",")
            ));
        }
    }
    s
}

fn sensitivity_csv(rows: &[estimation::InitSensitivity]) -> String {
    let mut s = String::from("parameter,baseline,refit,drift_in_se\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.name, r.baseline, r.refit, r.drift_in_se));
    }
    s
}

fn value_name(v: &impl clap::ValueEnum) -> String {
    v.to_possible_value().map(|p| p.get_name().to_owned()).unwrap_or_default()
}

fn bundled_checksum(path: &str, text: &str) -> Checksum {
    Checksum {
        path: path.to_owned(),
        sha256: sha256(text.as_bytes()),
    }
}

fn input_checksums(data: &Dataset, calendar: Option<&PathBuf>) -> Result<Vec<Checksum>, Failure> {
    let mut out = Vec::new();
    let mut paths: Vec<&PathBuf> = data.inputs.iter().map(|(_, p)| p).collect();
    paths.extend(calendar);
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
        out.push(Checksum {
            path: p.display().to_string(),
            sha256: sha256(&bytes),
        });
    }
    if calendar.is_none() {
        out.push(bundled_checksum("bundled:forks_all.csv", events::ALL_FORKS_CSV));
        out.push(bundled_checksum("bundled:forks_hard.csv", events::HARD_FORKS_CSV));
    }
    Ok(out)
}

pub fn report(a: &ReportArgs, out: &mut dyn Write) -> Outcome {
    if a.window == 0 {
        return Err(Failure::usage("--window must be at least 1"));
    }
    if a.horizon == 0 {
        return Err(Failure::usage("--horizon must be at least 1"));
    }
    let opts = commands::fit_options(a.starts)?;
    let data = data::load(&a.data)?;
    let calendar = data::calendar(a.events.as_deref(), false)?;
    let hard = data::calendar(a.events.as_deref(), true)?;
    let dir = a.output.out.clone().unwrap_or_else(|| PathBuf::from("report"));
    let inputs = input_checksums(&data, a.events.as_ref())?;
    let with_index = data.index.is_some();

    let mut bundle = Bundle::default();
    bundle.record(
        "descriptive",
        commands::descriptive_artifacts(&data).map_err(|f| f.message),
    );

    // Independent fits run concurrently; results keep the job order.
    let mut jobs = Vec::new();
    for location in [DummyLocation::Mean, DummyLocation::Variance] {
        for idx in [false, true] {
            let s = spec(location, RegressorKind::Dummy, idx, a.nu);
            jobs.push(Job {
                stage: format!("fit_{}", s.slug()),
                prefix: "fit",
                spec: s,
                calendar: &calendar,
            });
        }
    }
    let count = spec(DummyLocation::Variance, RegressorKind::Count, with_index, a.nu);
    jobs.push(Job {
        stage: format!("fit_{}", count.slug()),
        prefix: "fit",
        spec: count,
        calendar: &calendar,
    });
    for location in [DummyLocation::Mean, DummyLocation::Variance] {
        let s = spec(location, RegressorKind::Dummy, with_index, a.nu);
        jobs.push(Job {
            stage: format!("hard_fit_{}", s.slug()),
            prefix: "hard_fit",
            spec: s,
            calendar: &hard,
        });
    }
    if a.proxy == Proxy::Sigma {
        let s = commands::proxy_spec(with_index, a.nu);
        jobs.push(Job {
            stage: format!("fit_{}", s.slug()),
            prefix: "fit",
            spec: s,
            calendar: &calendar,
        });
    }

    let skip_reason = |job: &Job| {
        if job.spec.include_index && !with_index {
            Some("no index series given")
        } else if job.calendar.is_empty() {
            Some("the calendar has no events of this kind")
        } else {
            None
        }
    };
    let results: Vec<Result<Result<FitResult, forkeffect::Error>, &str>> = jobs
        .par_iter()
        .map(|job| match skip_reason(job) {
            Some(why) => Err(why),
            None => Ok(run_job(job, &data, a, &opts)),
        })
        .collect();

    let mut fits: BTreeMap<String, FitResult> = BTreeMap::new();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Err(why) => bundle.skip(&job.stage, why),
            Ok(Ok(fit)) => {
                bundle.record(&job.stage, commands::fit_artifacts(&fit, job.prefix).map_err(|f| f.message));
                fits.insert(job.stage.clone(), fit);
            }
            Ok(Err(e)) => {
                let diag = commands::diagnostics_artifact(&job.spec, &e, job.prefix);
                let msg = e.to_string();
                match diag {
                    Ok(file) => bundle.push(&job.stage, Status::Failed, Some(msg), vec![file]),
                    Err(_) => bundle.record(&job.stage, Err(msg)),
                }
            }
        }
    }

    let main_slug = spec(DummyLocation::Variance, RegressorKind::Dummy, with_index, a.nu).slug();
    let main_fit = fits.get(&format!("fit_{main_slug}"));
    let count_fit = fits.get(&format!("fit_{}", count.slug()));
    bundle.record(
        "ic_comparison",
        match (main_fit, count_fit) {
            (Some(d), Some(c)) => ic_artifacts(d, c),
            _ => Err("needs both the dummy and the count variance fits".into()),
        },
    );

    let tested: Vec<&FitResult> = jobs
        .iter()
        .filter(|j| j.spec.dummy_location != DummyLocation::None)
        .filter_map(|j| fits.get(&j.stage))
        .collect();
    bundle.record(
        "hypotheses",
        Ok(vec![("hypotheses.csv".into(), hypotheses_csv(&tested).into_bytes())]),
    );

    let suites = (|| -> Result<Vec<Artifact>, String> {
        let vol = match a.proxy {
            Proxy::AbsReturn => data.asset.values.iter().map(|r| r.abs()).collect(),
            Proxy::Sigma => {
                let slug = commands::proxy_spec(with_index, a.nu).slug();
                fits.get(&format!("fit_{slug}"))
                    .ok_or("the volatility proxy fit failed")?
                    .sigma_path
                    .sigma
                    .clone()
            }
        };
        let placed = events::align_calendar(&calendar, &data.asset.dates, a.date_policy).map_err(|e| e.to_string())?;
        let s = commands::run_suites(&data.asset.dates, &vol, &placed, a.window, a.horizon, a.baseline.into())
            .map_err(|e| e.to_string())?;
        let mut files = commands::suite_artifacts(&s).map_err(|f| f.message)?;
        files.push((
            "volatility_proxy.csv".into(),
            commands::proxy_csv(&data.asset.dates, &vol).into_bytes(),
        ));
        Ok(files)
    })();
    bundle.record("group_tests", suites);

    bundle.record(
        "init_sensitivity",
        match main_fit {
            None => Err("needs the variance dummy fit".into()),
            Some(fit) => (|| {
                let (regs, _) = events::build_regressors(&calendar, &data.asset.dates, a.date_policy)?;
                let md = forkeffect::egarch::ModelData::new(
                    &data.asset,
                    data.index.as_ref().filter(|_| fit.spec.include_index),
                    &regs,
                )?;
                estimation::init_sensitivity(&md, fit, &opts)
            })()
            .map(|rows| vec![("init_sensitivity.csv".into(), sensitivity_csv(&rows).into_bytes())])
            .map_err(|e| e.to_string()),
        },
    );

    let mut settings = BTreeMap::new();
    settings.insert("returns", a.data.returns.to_string());
    settings.insert("start", a.data.start.map(|d| d.to_string()).unwrap_or_default());
    settings.insert("end", a.data.end.map(|d| d.to_string()).unwrap_or_default());
    settings.insert(
        "date_policy",
        serde_json::to_value(a.date_policy)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default(),
    );
    settings.insert("window", a.window.to_string());
    settings.insert("horizon", a.horizon.to_string());
    settings.insert("proxy", value_name(&a.proxy));
    settings.insert("baseline", value_name(&a.baseline));
    settings.insert(
        "nu",
        match a.nu {
            Nu::Fixed(v) => v.to_string(),
            Nu::Estimate => "estimate".into(),
        },
    );
    settings.insert("starts", a.starts.to_string());
    settings.insert("observations", data.asset.len().to_string());
    settings.insert("events", calendar.len().to_string());
    settings.insert("hard_events", hard.len().to_string());

    let manifest = Manifest {
        tool: "forkeffect",
        version: env!("CARGO_PKG_VERSION"),
        settings,
        inputs,
        artifacts: bundle
            .files
            .iter()
            .map(|(n, b)| Checksum {
                path: n.clone(),
                sha256: sha256(b),
            })
            .collect(),
        stages: bundle.stages.clone(),
    };
    let mut files = std::mem::take(&mut bundle.files);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::input(e.to_string()))? + "\n";
    files.push(("manifest.json".into(), json.clone().into_bytes()));
    commands::write_artifacts(&dir, &files)?;

    let mut summary = String::new();
    for s in &manifest.stages {
        let status = match s.status {
            Status::Ok => "ok",
            Status::Failed => "FAILED",
            Status::Skipped => "skipped",
        };
        summary.push_str(&format!("{:<36}{status}", s.name));
        if let Some(m) = &s.message {
            summary.push_str(&format!("  ({m})"));
        }
        summary.push('\n');
    }
    summary.push_str(&format!(
        "{} artifacts and manifest.json written to {}\n",
        manifest.artifacts.len(),
        dir.display()
    ));
    if a.output.format == crate::args::Format::Json {
        summary = json;
    }
    out.write_all(summary.as_bytes())
        .map_err(|e| Failure::input(format!("stdout: {e}")))?;

    let failed = bundle.failed();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            PARTIAL,
            format!("{} stage(s) failed: {}; see manifest.json", failed.len(), failed.join(", ")),
        ))
    }
}
