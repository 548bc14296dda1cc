//! EGARCH(1,1) with unit-variance Student-t innovations and an optional
//! event regressor in either the mean or the log-variance equation:
//!
//! ```text
//! R(t)        = mu + d_mean D(t) + d_index R_index(t) + eps(t)
//! eps(t)      = sigma(t) z(t)
//! ln sigma²(t) = omega + alpha (|z(t-1)| - E|z|) + gamma z(t-1)
//!               + beta ln sigma²(t-1) + d_var X(t)
//! ```
//!
//! `X(t)` is the event dummy D(t) or the daily event count C(t). The
//! regressor is known in advance, so it enters contemporaneously.
//! The first log-variance is the seed (see [`VarianceInit`]) plus
//! `d_var X(1)`; the shock terms start at t = 2.

mod density;
mod model;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventRegressors, RegressorKind};
use crate::timeseries::ReturnSeries;

pub use density::{expected_abs_z, std_t_log_density, StandardizedT};
pub use model::{DummyLocation, ModelSpec, ParamName, ParameterSet, VarianceInit, DEFAULT_NU};

/// Returns, optional index returns and event regressors on one date axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub index: Option<Vec<f64>>,
    pub dummy: Vec<f64>,
    pub count: Vec<f64>,
}

impl ModelData {
    pub fn new(
        returns: &ReturnSeries,
        index: Option<&ReturnSeries>,
        regressors: &EventRegressors,
    ) -> Result<Self> {
        if regressors.dates != returns.dates {
            return Err(Error::InvalidInput(
                "event regressors are not on the return date axis".into(),
            ));
        }
        if let Some(ix) = index {
            if ix.dates != returns.dates {
                return Err(Error::InvalidInput(
                    "index returns are not on the asset date axis".into(),
                ));
            }
        }
        Ok(Self {
            dates: returns.dates.clone(),
            returns: returns.values.clone(),
            index: index.map(|s| s.values.clone()),
            dummy: regressors.values(RegressorKind::Dummy),
            count: regressors.values(RegressorKind::Count),
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Same data with `c` added to every asset return.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            returns: self.returns.iter().map(|r| r + c).collect(),
            ..self.clone()
        }
    }

    pub fn sample_variance(&self) -> f64 {
        sample_variance(&self.returns)
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidInput("no observations".into()));
        }
        let n = self.len();
        if self.dates.len() != n || self.dummy.len() != n || self.count.len() != n {
            return Err(Error::InvalidInput("model data columns differ in length".into()));
        }
        match (&self.index, spec.include_index) {
            (None, true) => Err(Error::InvalidSpec(
                "spec includes the index but no index returns were supplied".into(),
            )),
            (Some(ix), _) if ix.len() != n => {
                Err(Error::InvalidInput("index column has the wrong length".into()))
            }
            _ => Ok(()),
        }
    }

    fn variance_regressor(&self, spec: &ModelSpec) -> Option<&[f64]> {
        match (spec.dummy_location, spec.regressor_kind) {
            (DummyLocation::Variance, RegressorKind::Dummy) => Some(&self.dummy),
            (DummyLocation::Variance, RegressorKind::Count) => Some(&self.count),
            _ => None,
        }
    }
}

pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

/// Conditional mean `mu + d_mean D(t) + d_index R_index(t)`.
struct MeanEquation<'a> {
    mu: f64,
    dummy: Option<(f64, &'a [f64])>,
    index: Option<(f64, &'a [f64])>,
}

impl<'a> MeanEquation<'a> {
    fn new(params: &ParameterSet, spec: &ModelSpec, dummy: &'a [f64], index: Option<&'a [f64]>) -> Self {
        Self {
            mu: params.mu,
            dummy: (spec.dummy_location == DummyLocation::Mean)
                .then(|| (params.delta_fork_mean.unwrap_or(0.0), dummy)),
            index: if spec.include_index {
                index.map(|ix| (params.delta_crix.unwrap_or(0.0), ix))
            } else {
                None
            },
        }
    }

    #[inline]
    fn at(&self, t: usize) -> f64 {
        let mut m = self.mu;
        if let Some((d, x)) = self.dummy {
            m += d * x[t];
        }
        if let Some((d, x)) = self.index {
            m += d * x[t];
        }
        m
    }
}

struct Recursion<'a> {
    omega: f64,
    alpha: f64,
    gamma: f64,
    beta: f64,
    delta: f64,
    regressor: Option<&'a [f64]>,
    expected_abs: f64,
}

impl<'a> Recursion<'a> {
    fn new(params: &ParameterSet, regressor: Option<&'a [f64]>, dist: &StandardizedT) -> Self {
        Self {
            omega: params.omega,
            alpha: params.alpha,
            gamma: params.gamma,
            beta: params.beta,
            delta: if regressor.is_some() {
                params.delta_fork_variance.unwrap_or(0.0)
            } else {
                0.0
            },
            regressor,
            expected_abs: dist.expected_abs(),
        }
    }

    #[inline]
    fn event_term(&self, t: usize) -> f64 {
        match self.regressor {
            Some(x) => self.delta * x[t],
            None => 0.0,
        }
    }

    #[inline]
    fn first(&self, seed: f64) -> f64 {
        seed + self.event_term(0)
    }

    #[inline]
    fn next(&self, t: usize, prev_log_var: f64, prev_z: f64) -> f64 {
        self.omega
            + self.alpha * (prev_z.abs() - self.expected_abs)
            + self.gamma * prev_z
            + self.beta * prev_log_var
            + self.event_term(t)
    }
}

/// Fitted conditional volatility and standardized residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityPath {
    pub dates: Vec<NaiveDate>,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
    pub log_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub path: VolatilityPath,
    /// Per-observation log-likelihood contributions.
    pub ll_terms: Vec<f64>,
    pub log_likelihood: f64,
}

fn seed_log_var(init: VarianceInit, params: &ParameterSet, residuals: impl Fn() -> Vec<f64>) -> Result<f64> {
    match init {
        VarianceInit::Fixed(v) => Ok(v),
        VarianceInit::Unconditional => Ok(params.omega / (1.0 - params.beta)),
        VarianceInit::SampleVariance => {
            let eps = residuals();
            if eps.len() < 2 {
                return Err(Error::InvalidInput(
                    "sample-variance initialization needs at least 2 observations".into(),
                ));
            }
            Ok(sample_variance(&eps).ln())
        }
    }
}

fn run_filter(
    data: &ModelData,
    params: &ParameterSet,
    spec: &ModelSpec,
    mut sink: impl FnMut(usize, f64, f64, f64, f64),
) -> Result<()> {
    spec.validate()?;
    params.validate()?;
    data.check(spec)?;
    let dist = StandardizedT::new(params.nu)?;
    let mean = MeanEquation::new(params, spec, &data.dummy, data.index.as_deref());
    let rec = Recursion::new(params, data.variance_regressor(spec), &dist);

    let seed = seed_log_var(spec.init, params, || {
        data.returns
            .iter()
            .enumerate()
            .map(|(t, r)| r - mean.at(t))
            .collect()
    })?;
    if !seed.is_finite() {
        return Err(Error::NonFinite {
            quantity: "initial log-variance",
            date: data.dates[0],
        });
    }

    let mut log_var = rec.first(seed);
    let mut prev_z = 0.0;
    for t in 0..data.len() {
        if t > 0 {
            log_var = rec.next(t, log_var, prev_z);
        }
        let sigma = (0.5 * log_var).exp();
        let z = (data.returns[t] - mean.at(t)) / sigma;
        let ll = dist.log_density(z) - 0.5 * log_var;
        if !(sigma > 0.0) || !sigma.is_finite() || !z.is_finite() || !ll.is_finite() {
            return Err(Error::NonFinite {
                quantity: "conditional variance",
                date: data.dates[t],
            });
        }
        sink(t, log_var, sigma, z, ll);
        prev_z = z;
    }
    Ok(())
}

/// Run the variance recursion over `data` and evaluate the log-likelihood.
pub fn filter(data: &ModelData, params: &ParameterSet, spec: &ModelSpec) -> Result<FilterOutput> {
    let n = data.len();
    let mut sigma = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut log_var = Vec::with_capacity(n);
    let mut ll_terms = Vec::with_capacity(n);
    run_filter(data, params, spec, |_, lv, s, zt, ll| {
        log_var.push(lv);
        sigma.push(s);
        z.push(zt);
        ll_terms.push(ll);
    })?;
    let log_likelihood = ll_terms.iter().sum();
    Ok(FilterOutput {
        path: VolatilityPath {
            dates: data.dates.clone(),
            sigma,
            z,
            log_var,
        },
        ll_terms,
        log_likelihood,
    })
}

/// Total log-likelihood without materializing the path.
pub fn log_likelihood(data: &ModelData, params: &ParameterSet, spec: &ModelSpec) -> Result<f64> {
    let mut total = 0.0;
    run_filter(data, params, spec, |_, _, _, _, ll| total += ll)?;
    Ok(total)
}

/// Per-observation log-likelihood terms only.
pub fn log_likelihood_terms(data: &ModelData, params: &ParameterSet, spec: &ModelSpec) -> Result<Vec<f64>> {
    let mut terms = Vec::with_capacity(data.len());
    run_filter(data, params, spec, |_, _, _, _, ll| terms.push(ll))?;
    Ok(terms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub returns: ReturnSeries,
    pub path: VolatilityPath,
    pub initial_log_var: f64,
}

/// Generate `horizon` returns from the model, drawing unit-variance
/// Student-t shocks from a ChaCha8 stream seeded with `seed`.
///
/// The regressors (and index returns, when the spec uses them) supply the
/// date axis and must cover exactly `horizon` days. The recursion starts at
/// `omega / (1 - beta)` unless the spec fixes another value; a
/// `SampleVariance` spec falls back to the unconditional level since no
/// sample exists yet. Filtering the output with
/// `VarianceInit::Fixed(initial_log_var)` reproduces the path bit for bit.
pub fn simulate(
    params: &ParameterSet,
    spec: &ModelSpec,
    regressors: &EventRegressors,
    index_returns: Option<&ReturnSeries>,
    horizon: usize,
    seed: u64,
) -> Result<Simulation> {
    spec.validate()?;
    params.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidInput("simulation horizon must be at least 1".into()));
    }
    if regressors.len() != horizon {
        return Err(Error::InvalidInput(format!(
            "regressors cover {} days, horizon is {horizon}",
            regressors.len()
        )));
    }
    if spec.include_index {
        match index_returns {
            Some(ix) if ix.dates == regressors.dates => {}
            Some(_) => {
                return Err(Error::InvalidInput(
                    "index returns are not on the regressor date axis".into(),
                ))
            }
            None => {
                return Err(Error::InvalidSpec(
                    "spec includes the index but no index returns were supplied".into(),
                ))
            }
        }
    }

    let dist = StandardizedT::new(params.nu)?;
    let draw = StudentT::new(params.nu)
        .map_err(|e| Error::InvalidParameters(format!("student-t: {e}")))?;
    let scale = dist.unit_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let dummy = regressors.values(RegressorKind::Dummy);
    let count = regressors.values(RegressorKind::Count);
    let var_x = match (spec.dummy_location, spec.regressor_kind) {
        (DummyLocation::Variance, RegressorKind::Dummy) => Some(dummy.as_slice()),
        (DummyLocation::Variance, RegressorKind::Count) => Some(count.as_slice()),
        _ => None,
    };
    let index_vals = index_returns.map(|s| s.values.as_slice());
    let mean = MeanEquation::new(params, spec, &dummy, index_vals);
    let rec = Recursion::new(params, var_x, &dist);

    let initial_log_var = match spec.init {
        VarianceInit::Fixed(v) => v,
        VarianceInit::Unconditional | VarianceInit::SampleVariance => params.omega / (1.0 - params.beta),
    };

    let mut returns = Vec::with_capacity(horizon);
    let mut sigma = Vec::with_capacity(horizon);
    let mut zs = Vec::with_capacity(horizon);
    let mut log_var = Vec::with_capacity(horizon);

    let mut lv = rec.first(initial_log_var);
    let mut prev_z = 0.0;
    for t in 0..horizon {
        if t > 0 {
            lv = rec.next(t, lv, prev_z);
        }
        let s = (0.5 * lv).exp();
        let shock = scale * draw.sample(&mut rng);
        let m = mean.at(t);
        let r = m + s * shock;
        // The realized standardized residual, exactly as a filter would see it.
        let z = (r - m) / s;
        if !r.is_finite() || !z.is_finite() {
            return Err(Error::NonFinite {
                quantity: "simulated return",
                date: regressors.dates[t],
            });
        }
        returns.push(r);
        sigma.push(s);
        zs.push(z);
        log_var.push(lv);
        prev_z = z;
    }

    Ok(Simulation {
        returns: ReturnSeries::new(regressors.dates.clone(), returns)?,
        path: VolatilityPath {
            dates: regressors.dates.clone(),
            sigma,
            z: zs,
            log_var,
        },
        initial_log_var,
    })
}

/// Consecutive calendar days starting at `start`.
pub fn synthetic_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (0..n as u64).map(|i| start + chrono::Days::new(i)).collect()
}

/// Event counts with one event every `every` days, starting at `offset`.
pub fn periodic_events(dates: &[NaiveDate], every: usize, offset: usize) -> EventRegressors {
    let count = (0..dates.len())
        .map(|t| u32::from(every > 0 && t >= offset && (t - offset) % every == 0))
        .collect();
    EventRegressors::from_counts(dates, count).expect("lengths match")
}
