//! Quasi-maximum-likelihood estimation of the EGARCH-t models.
//!
//! The optimizer works on an unconstrained vector: `beta = tanh(b)` and,
//! when the degrees of freedom are free, `nu = 2 + exp(v)`. All other
//! coefficients enter as they are. The objective is the negative mean
//! per-observation log-likelihood.

mod inference;
mod optim;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::egarch::{self, DummyLocation, ModelData, ModelSpec, ParamName, ParameterSet, VolatilityPath};
use crate::error::{Error, Result};

pub use inference::{
    ic_preference, information_criteria, reject_levels, sandwich, two_sided_p, Covariance, Hypothesis,
    HypothesisOutcome, InformationCriteria, SIGNIFICANCE_LEVELS,
};

/// Fewest observations accepted by [`fit`].
pub const MIN_OBS: usize = 300;
/// Below this sample size a warning is logged.
pub const WARN_OBS: usize = 1000;
/// `|b|` beyond which `beta = tanh(b)` is flagged as sitting on the boundary.
pub const BOUNDARY_B: f64 = 7.0;

/// `(beta0, alpha0, gamma0)` for each deterministic start.
pub const START_GRID: [(f64, f64, f64); 5] = [
    (0.9, 0.05, 0.1),
    (0.97, 0.1, 0.2),
    (0.8, 0.15, 0.0),
    (0.95, 0.02, -0.1),
    (0.99, 0.05, 0.05),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Number of starts taken from the deterministic grid (1 to 5).
    pub starts: usize,
    /// Nelder-Mead budget per free parameter.
    pub simplex_evals_per_param: usize,
    pub max_iter: usize,
    pub rel_improvement_tol: f64,
    pub grad_norm_tol: f64,
    pub parallel: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: START_GRID.len(),
            simplex_evals_per_param: 200,
            max_iter: 1000,
            rel_improvement_tol: 1e-10,
            grad_norm_tol: 1e-6,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: ParamName,
    pub estimate: f64,
    /// Robust (sandwich) standard error.
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    pub hessian_std_error: f64,
}

/// Which stopping rule accepted a start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Relative improvement and gradient norm both under tolerance.
    Gradient,
    /// Improvement under tolerance for several iterations while the
    /// finite-difference gradient stays above it; the `|z|` term makes the
    /// likelihood kinked in the mean parameters.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub index: usize,
    pub log_likelihood: Option<f64>,
    pub converged: bool,
    pub stop: Option<StopRule>,
    pub iterations: usize,
    pub grad_norm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub stop: StopRule,
    pub iterations: usize,
    /// Gradient norm of the mean log-likelihood in the optimizer's space.
    pub grad_norm: f64,
    pub best_start: usize,
    pub starts: Vec<StartReport>,
}

/// All starts failed. Holds the best point reached, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationFailure {
    pub reason: String,
    pub spec: ModelSpec,
    pub best_params: Option<ParameterSet>,
    pub best_log_likelihood: Option<f64>,
    pub starts: Vec<StartReport>,
}

impl fmt::Display for EstimationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (spec {}", self.reason, self.spec.slug())?;
        if let Some(ll) = self.best_log_likelihood {
            write!(f, ", best log-likelihood {ll}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: ParameterSet,
    pub coefficients: Vec<Coefficient>,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub ic: InformationCriteria,
    pub sigma_path: VolatilityPath,
    pub convergence: Convergence,
    /// `|beta|` is numerically at 1.
    pub boundary_warning: bool,
}

impl FitResult {
    pub fn coefficient(&self, name: ParamName) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn robust_se(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.std_error).collect()
    }

    pub fn t_values(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.t_value).collect()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.p_value).collect()
    }

    /// Number of free parameters.
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    /// Reference degrees of freedom for coefficient tests.
    pub fn df(&self) -> f64 {
        (self.n_obs - self.k()) as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Maps between natural parameters and the optimizer's unconstrained vector.
struct Transform {
    names: Vec<ParamName>,
}

impl Transform {
    fn new(spec: &ModelSpec) -> Self {
        Self {
            names: spec.free_parameters(),
        }
    }

    fn to_natural(&self, x: &[f64]) -> Vec<f64> {
        self.names
            .iter()
            .zip(x)
            .map(|(n, &v)| match n {
                ParamName::Beta => v.tanh(),
                ParamName::Nu => 2.0 + v.exp(),
                _ => v,
            })
            .collect()
    }

    fn to_free(&self, theta: &[f64]) -> Vec<f64> {
        self.names
            .iter()
            .zip(theta)
            .map(|(n, &v)| match n {
                ParamName::Beta => v.atanh(),
                ParamName::Nu => (v - 2.0).ln(),
                _ => v,
            })
            .collect()
    }

    fn position(&self, name: ParamName) -> Option<usize> {
        self.names.iter().position(|n| *n == name)
    }
}

fn negative_mean_ll(data: &ModelData, spec: &ModelSpec, tr: &Transform, x: &[f64]) -> f64 {
    let theta = tr.to_natural(x);
    match ParameterSet::from_vec(spec, &theta).and_then(|p| egarch::log_likelihood(data, &p, spec)) {
        Ok(ll) if ll.is_finite() => -ll / data.len() as f64,
        _ => f64::INFINITY,
    }
}

/// Moment-based start for grid entry `i`.
fn start_point(data: &ModelData, spec: &ModelSpec, i: usize) -> ParameterSet {
    let (beta, alpha, gamma) = START_GRID[i];
    let n = data.len() as f64;
    let r_mean = data.returns.iter().sum::<f64>() / n;
    let mut delta_crix = None;
    let mut mu = r_mean;
    let mut resid: Vec<f64> = data.returns.iter().map(|r| r - r_mean).collect();
    if spec.include_index {
        if let Some(ix) = &data.index {
            let ix_mean = ix.iter().sum::<f64>() / n;
            let sxy: f64 = ix.iter().zip(&data.returns).map(|(x, y)| (x - ix_mean) * (y - r_mean)).sum();
            let sxx: f64 = ix.iter().map(|x| (x - ix_mean).powi(2)).sum();
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            mu = r_mean - slope * ix_mean;
            resid = data.returns.iter().zip(ix).map(|(y, x)| y - mu - slope * x).collect();
            delta_crix = Some(slope);
        }
    }
    let var = egarch::sample_variance(&resid).max(1e-300);
    ParameterSet {
        mu,
        delta_fork_mean: None,
        delta_crix,
        omega: (1.0 - beta) * var.ln(),
        alpha,
        gamma,
        beta,
        delta_fork_variance: None,
        nu: spec.nu,
    }
    .conform(spec)
}

fn simplex_steps(tr: &Transform, start: &ParameterSet, data: &ModelData) -> Vec<f64> {
    let scale = data.sample_variance().sqrt();
    tr.names
        .iter()
        .map(|n| match n {
            ParamName::Mu | ParamName::DeltaForkMean => 0.1 * scale,
            ParamName::DeltaCrix => 0.1,
            ParamName::Omega => 0.05 + 0.1 * start.omega.abs(),
            ParamName::Alpha | ParamName::Gamma => 0.05,
            ParamName::Beta => 0.3,
            ParamName::DeltaForkVariance => 0.1,
            ParamName::Nu => 0.3,
        })
        .collect()
}

struct StartRun {
    report: StartReport,
    x: Option<Vec<f64>>,
}

fn run_start(data: &ModelData, spec: &ModelSpec, tr: &Transform, opts: &FitOptions, i: usize) -> StartRun {
    let start = start_point(data, spec, i);
    let x0 = tr.to_free(&start.to_vec(spec));
    let objective = |x: &[f64]| negative_mean_ll(data, spec, tr, x);
    let fail = |msg: String| StartRun {
        report: StartReport {
            index: i,
            log_likelihood: None,
            converged: false,
            stop: None,
            iterations: 0,
            grad_norm: None,
            error: Some(msg),
        },
        x: None,
    };
    if !objective(&x0).is_finite() {
        return fail("log-likelihood not finite at the start point".into());
    }
    let steps = simplex_steps(tr, &start, data);
    let (x_nm, f_nm) = optim::nelder_mead(&objective, &x0, &steps, opts.simplex_evals_per_param * x0.len());
    if !f_nm.is_finite() {
        return fail("simplex stage did not reach a finite point".into());
    }
    let m = optim::bfgs(
        &objective,
        &x_nm,
        optim::Tolerances {
            rel_improvement: opts.rel_improvement_tol,
            grad_norm: opts.grad_norm_tol,
            max_iter: opts.max_iter,
            ..Default::default()
        },
    );
    let stop = m.stop.map(|s| match s {
        optim::Stop::Gradient => StopRule::Gradient,
        optim::Stop::Stalled => StopRule::Stalled,
    });
    let n = data.len() as f64;
    StartRun {
        report: StartReport {
            index: i,
            log_likelihood: m.f.is_finite().then(|| -m.f * n),
            converged: stop.is_some(),
            stop,
            iterations: m.iterations,
            grad_norm: m.grad_norm.is_finite().then_some(m.grad_norm),
            error: stop.is_none().then(|| {
                format!(
                    "not converged after {} iterations (gradient norm {:.3e})",
                    m.iterations, m.grad_norm
                )
            }),
        },
        x: m.f.is_finite().then_some(m.x),
    }
}

/// Fit `spec` to `data` with default options.
pub fn fit(data: &ModelData, spec: &ModelSpec) -> Result<FitResult> {
    fit_with(data, spec, &FitOptions::default())
}

pub fn fit_with(data: &ModelData, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    spec.validate()?;
    if data.len() < MIN_OBS {
        return Err(Error::InvalidInput(format!(
            "{} observations; at least {MIN_OBS} are needed",
            data.len()
        )));
    }
    if data.len() < WARN_OBS {
        log::warn!("only {} observations; estimates may be unreliable", data.len());
    }
    if !(1..=START_GRID.len()).contains(&opts.starts) {
        return Err(Error::InvalidInput(format!(
            "number of starts must be between 1 and {}",
            START_GRID.len()
        )));
    }
    if spec.include_index && data.index.is_none() {
        return Err(Error::InvalidSpec(
            "spec includes the index but no index returns were supplied".into(),
        ));
    }

    let tr = Transform::new(spec);
    let runs: Vec<StartRun> = if opts.parallel {
        (0..opts.starts)
            .into_par_iter()
            .map(|i| run_start(data, spec, &tr, opts, i))
            .collect()
    } else {
        (0..opts.starts).map(|i| run_start(data, spec, &tr, opts, i)).collect()
    };
    let starts: Vec<StartReport> = runs.iter().map(|r| r.report.clone()).collect();

    // best converged start; ties go to the lowest index
    let mut best: Option<&StartRun> = None;
    for r in runs.iter().filter(|r| r.report.converged) {
        let ll = r.report.log_likelihood.unwrap_or(f64::NEG_INFINITY);
        if best.is_none_or(|b| ll > b.report.log_likelihood.unwrap_or(f64::NEG_INFINITY)) {
            best = Some(r);
        }
    }
    let Some(best) = best else {
        let fallback = runs
            .iter()
            .filter(|r| r.x.is_some())
            .max_by(|a, b| {
                let la = a.report.log_likelihood.unwrap_or(f64::NEG_INFINITY);
                let lb = b.report.log_likelihood.unwrap_or(f64::NEG_INFINITY);
                la.total_cmp(&lb).then(b.report.index.cmp(&a.report.index))
            });
        return Err(Error::Estimation(Box::new(EstimationFailure {
            reason: format!("none of {} starts converged", opts.starts),
            spec: *spec,
            best_params: fallback
                .and_then(|r| r.x.as_ref())
                .and_then(|x| ParameterSet::from_vec(spec, &tr.to_natural(x)).ok()),
            best_log_likelihood: fallback.and_then(|r| r.report.log_likelihood),
            starts,
        })));
    };

    let x = best.x.clone().expect("converged start has a point");
    let boundary_warning = tr.position(ParamName::Beta).is_some_and(|i| x[i].abs() > BOUNDARY_B);
    if boundary_warning {
        log::warn!("beta is at the stationarity boundary for spec {}", spec.slug());
    }
    let params = ParameterSet::from_vec(spec, &tr.to_natural(&x))?;
    let convergence = Convergence {
        converged: true,
        stop: best.report.stop.unwrap_or(StopRule::Gradient),
        iterations: best.report.iterations,
        grad_norm: best.report.grad_norm.unwrap_or(f64::NAN),
        best_start: best.report.index,
        starts,
    };
    finish(data, spec, params, convergence, boundary_warning)
}

/// Standard errors, tests and criteria at `params`.
fn finish(
    data: &ModelData,
    spec: &ModelSpec,
    params: ParameterSet,
    convergence: Convergence,
    boundary_warning: bool,
) -> Result<FitResult> {
    let out = egarch::filter(data, &params, spec)?;
    let cov = covariance(data, spec, &params)?;
    let names = spec.free_parameters();
    let n = data.len();
    let df = (n - names.len()) as f64;
    let coefficients = names
        .iter()
        .zip(params.to_vec(spec))
        .zip(cov.robust_se().into_iter().zip(cov.hessian_se()))
        .map(|((&name, estimate), (se, hse))| {
            let t_value = estimate / se;
            Coefficient {
                name,
                estimate,
                std_error: se,
                t_value,
                p_value: two_sided_p(t_value, df),
                hessian_std_error: hse,
            }
        })
        .collect::<Vec<_>>();
    if coefficients.iter().any(|c| !(c.std_error > 0.0) || !c.std_error.is_finite()) {
        return Err(Error::Singular("a standard error is not positive".into()));
    }
    Ok(FitResult {
        spec: *spec,
        params,
        coefficients,
        log_likelihood: out.log_likelihood,
        n_obs: n,
        ic: information_criteria(out.log_likelihood, names.len(), n)?,
        sigma_path: out.path,
        convergence,
        boundary_warning,
    })
}

/// Sandwich and Hessian-only covariance at `params`, in natural coordinates
/// ordered as [`ModelSpec::free_parameters`].
pub fn covariance(data: &ModelData, spec: &ModelSpec, params: &ParameterSet) -> Result<Covariance> {
    let theta = params.to_vec(spec);
    sandwich(&theta, |th| {
        let p = ParameterSet::from_vec(spec, th)?;
        egarch::log_likelihood_terms(data, &p, spec)
    })
}

/// Robust standard errors at `params`.
pub fn robust_se(data: &ModelData, spec: &ModelSpec, params: &ParameterSet) -> Result<Vec<f64>> {
    Ok(covariance(data, spec, params)?.robust_se())
}

/// Tests of the fork coefficients present in the fit.
pub fn test_hypotheses(fit: &FitResult) -> Result<Vec<HypothesisOutcome>> {
    let df = fit.df();
    let mut out = Vec::new();
    if let Some(c) = fit.coefficient(ParamName::DeltaForkMean) {
        out.push(HypothesisOutcome::new(Hypothesis::H1Mean, c.estimate, c.std_error, df));
    }
    if let Some(c) = fit.coefficient(ParamName::DeltaForkVariance) {
        out.push(HypothesisOutcome::new(Hypothesis::H2Variance, c.estimate, c.std_error, df));
    }
    if out.is_empty() || fit.spec.dummy_location == DummyLocation::None {
        return Err(Error::InvalidSpec(format!(
            "spec {} has no fork coefficient to test",
            fit.spec.slug()
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSensitivity {
    pub name: ParamName,
    pub baseline: f64,
    pub refit: f64,
    /// `|refit - baseline| / robust SE`.
    pub drift_in_se: f64,
}

/// Refit with the recursion seeded at `omega / (1 - beta)` and compare.
pub fn init_sensitivity(data: &ModelData, fit: &FitResult, opts: &FitOptions) -> Result<Vec<InitSensitivity>> {
    let spec = ModelSpec {
        init: egarch::VarianceInit::Unconditional,
        ..fit.spec
    };
    let refit = fit_with(data, &spec, opts)?;
    Ok(fit
        .coefficients
        .iter()
        .zip(&refit.coefficients)
        .map(|(a, b)| InitSensitivity {
            name: a.name,
            baseline: a.estimate,
            refit: b.estimate,
            drift_in_se: (b.estimate - a.estimate).abs() / a.std_error,
        })
        .collect())
}

/// Aligned coefficient table with standard errors in percent.
pub fn render_fit_table(fit: &FitResult) -> String {
    let mut s = format!(
        "{:<22}{:>14}{:>20}{:>12}{:>12}\n",
        "Parameter", "Estimate", "Std. Error (in %)", "t value", "p value"
    );
    for c in &fit.coefficients {
        s.push_str(&format!(
            "{:<22}{:>14.6}{:>20.4}{:>12.3}{:>12.4}\n",
            c.name.as_str(),
            c.estimate,
            100.0 * c.std_error,
            c.t_value,
            c.p_value
        ));
    }
    s.push_str(&format!(
        "\nLog-likelihood {:.4}   Observations {}   Free parameters {}   nu {}\n",
        fit.log_likelihood,
        fit.n_obs,
        fit.k(),
        fit.params.nu
    ));
    for (name, v) in InformationCriteria::NAMES.iter().zip(fit.ic.values()) {
        s.push_str(&format!("{name:<14}{v:>12.6}\n"));
    }
    if fit.boundary_warning {
        s.push_str("warning: beta at the stationarity boundary\n");
    }
    s
}

/// Machine-readable coefficient table.
pub fn fit_csv(fit: &FitResult) -> String {
    let mut s = String::from("parameter,estimate,std_error,t_value,p_value,hessian_std_error\n");
    for c in &fit.coefficients {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.name, c.estimate, c.std_error, c.t_value, c.p_value, c.hessian_std_error
        ));
    }
    s
}

#[cfg(test)]
mod tests;
