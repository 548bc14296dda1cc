use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::RegressorKind;

/// Degrees of freedom used throughout the fork study.
pub const DEFAULT_NU: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DummyLocation {
    #[default]
    None,
    Mean,
    Variance,
}

impl fmt::Display for DummyLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DummyLocation::None => "none",
            DummyLocation::Mean => "mean",
            DummyLocation::Variance => "variance",
        })
    }
}

impl FromStr for DummyLocation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DummyLocation::None),
            "mean" => Ok(DummyLocation::Mean),
            "variance" => Ok(DummyLocation::Variance),
            other => Err(Error::InvalidSpec(format!(
                "unknown dummy location `{other}` (expected none, mean or variance)"
            ))),
        }
    }
}

/// How the log-variance recursion is started.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum VarianceInit {
    /// `ln` of the sample variance (n - 1) of the mean-equation residuals.
    #[default]
    SampleVariance,
    /// `omega / (1 - beta)`.
    Unconditional,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Market-index return as a mean regressor.
    pub include_index: bool,
    pub dummy_location: DummyLocation,
    /// Which event regressor enters the variance equation.
    pub regressor_kind: RegressorKind,
    /// Degrees of freedom; the starting value when `estimate_nu` is set.
    pub nu: f64,
    pub estimate_nu: bool,
    pub init: VarianceInit,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            include_index: false,
            dummy_location: DummyLocation::None,
            regressor_kind: RegressorKind::Dummy,
            nu: DEFAULT_NU,
            estimate_nu: false,
            init: VarianceInit::SampleVariance,
        }
    }
}

impl ModelSpec {
    pub fn new(include_index: bool, dummy_location: DummyLocation) -> Self {
        Self {
            include_index,
            dummy_location,
            ..Self::default()
        }
    }

    pub fn with_regressor(mut self, kind: RegressorKind) -> Self {
        self.regressor_kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.regressor_kind == RegressorKind::Count
            && self.dummy_location != DummyLocation::Variance
        {
            return Err(Error::InvalidSpec(
                "the count regressor is only available in the variance equation".into(),
            ));
        }
        if !(self.nu > 2.0) || !self.nu.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "degrees of freedom must be > 2, got {}",
                self.nu
            )));
        }
        Ok(())
    }

    /// Short identifier, e.g. `variance_index` or `variance_index_count`.
    pub fn slug(&self) -> String {
        let mut s = format!(
            "{}_{}",
            self.dummy_location,
            if self.include_index { "index" } else { "noindex" }
        );
        if self.regressor_kind == RegressorKind::Count {
            s.push_str("_count");
        }
        if self.estimate_nu {
            s.push_str("_nu");
        }
        s
    }

    /// Free parameters in vector order.
    pub fn free_parameters(&self) -> Vec<ParamName> {
        let mut names = vec![ParamName::Mu];
        if self.dummy_location == DummyLocation::Mean {
            names.push(ParamName::DeltaForkMean);
        }
        if self.include_index {
            names.push(ParamName::DeltaCrix);
        }
        names.extend([
            ParamName::Omega,
            ParamName::Alpha,
            ParamName::Gamma,
            ParamName::Beta,
        ]);
        if self.dummy_location == DummyLocation::Variance {
            names.push(ParamName::DeltaForkVariance);
        }
        if self.estimate_nu {
            names.push(ParamName::Nu);
        }
        names
    }

    pub fn n_free(&self) -> usize {
        self.free_parameters().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    Mu,
    DeltaForkMean,
    DeltaCrix,
    Omega,
    Alpha,
    Gamma,
    Beta,
    DeltaForkVariance,
    Nu,
}

impl ParamName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::Mu => "mu",
            ParamName::DeltaForkMean => "delta_fork_mean",
            ParamName::DeltaCrix => "delta_crix",
            ParamName::Omega => "omega",
            ParamName::Alpha => "alpha",
            ParamName::Gamma => "gamma",
            ParamName::Beta => "beta",
            ParamName::DeltaForkVariance => "delta_fork_variance",
            ParamName::Nu => "nu",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub mu: f64,
    pub delta_fork_mean: Option<f64>,
    pub delta_crix: Option<f64>,
    pub omega: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub delta_fork_variance: Option<f64>,
    pub nu: f64,
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self {
            mu: 0.0,
            delta_fork_mean: None,
            delta_crix: None,
            omega: 0.0,
            alpha: 0.0,
            gamma: 0.0,
            beta: 0.0,
            delta_fork_variance: None,
            nu: DEFAULT_NU,
        }
    }
}

impl ParameterSet {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mu,
            self.delta_fork_mean.unwrap_or(0.0),
            self.delta_crix.unwrap_or(0.0),
            self.omega,
            self.alpha,
            self.gamma,
            self.beta,
            self.delta_fork_variance.unwrap_or(0.0),
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite coefficient".into()));
        }
        if !(self.beta.abs() < 1.0) {
            return Err(Error::InvalidParameters(format!(
                "|beta| must be < 1, got {}",
                self.beta
            )));
        }
        if !(self.nu > 2.0) || !self.nu.is_finite() {
            return Err(Error::InvalidParameters(format!(
                "nu must be > 2, got {}",
                self.nu
            )));
        }
        Ok(())
    }

    pub fn get(&self, name: ParamName) -> Option<f64> {
        match name {
            ParamName::Mu => Some(self.mu),
            ParamName::DeltaForkMean => self.delta_fork_mean,
            ParamName::DeltaCrix => self.delta_crix,
            ParamName::Omega => Some(self.omega),
            ParamName::Alpha => Some(self.alpha),
            ParamName::Gamma => Some(self.gamma),
            ParamName::Beta => Some(self.beta),
            ParamName::DeltaForkVariance => self.delta_fork_variance,
            ParamName::Nu => Some(self.nu),
        }
    }

    fn set(&mut self, name: ParamName, v: f64) {
        match name {
            ParamName::Mu => self.mu = v,
            ParamName::DeltaForkMean => self.delta_fork_mean = Some(v),
            ParamName::DeltaCrix => self.delta_crix = Some(v),
            ParamName::Omega => self.omega = v,
            ParamName::Alpha => self.alpha = v,
            ParamName::Gamma => self.gamma = v,
            ParamName::Beta => self.beta = v,
            ParamName::DeltaForkVariance => self.delta_fork_variance = Some(v),
            ParamName::Nu => self.nu = v,
        }
    }

    /// Free parameters of `spec` in vector order. Missing optional
    /// coefficients read as zero.
    pub fn to_vec(&self, spec: &ModelSpec) -> Vec<f64> {
        spec.free_parameters()
            .into_iter()
            .map(|n| self.get(n).unwrap_or(0.0))
            .collect()
    }

    pub fn from_vec(spec: &ModelSpec, values: &[f64]) -> Result<Self> {
        let names = spec.free_parameters();
        if names.len() != values.len() {
            return Err(Error::InvalidParameters(format!(
                "expected {} values for spec {}, got {}",
                names.len(),
                spec.slug(),
                values.len()
            )));
        }
        let mut p = ParameterSet {
            nu: spec.nu,
            ..Default::default()
        };
        for (n, &v) in names.into_iter().zip(values) {
            p.set(n, v);
        }
        Ok(p)
    }

    /// Keep only the coefficients that `spec` uses; absent ones become `None`.
    pub fn conform(&self, spec: &ModelSpec) -> Self {
        let names = spec.free_parameters();
        let keep = |n: ParamName, v: Option<f64>| {
            if names.contains(&n) {
                Some(v.unwrap_or(0.0))
            } else {
                None
            }
        };
        Self {
            delta_fork_mean: keep(ParamName::DeltaForkMean, self.delta_fork_mean),
            delta_crix: keep(ParamName::DeltaCrix, self.delta_crix),
            delta_fork_variance: keep(ParamName::DeltaForkVariance, self.delta_fork_variance),
            nu: if spec.estimate_nu { self.nu } else { spec.nu },
            ..*self
        }
    }
}
