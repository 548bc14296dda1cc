//! Unit-variance Student-t innovations.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 2.0) || !nu.is_finite() {
        return Err(Error::InvalidParameters(format!(
            "degrees of freedom must be finite and > 2, got {nu}"
        )));
    }
    Ok(())
}

/// `E|z|` for a Student-t with `nu` degrees of freedom rescaled to unit variance:
/// `2 sqrt(nu-2) Γ((nu+1)/2) / (sqrt(π) (nu-1) Γ(nu/2))`.
pub fn expected_abs_z(nu: f64) -> Result<f64> {
    check_nu(nu)?;
    let log_ratio = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0);
    Ok(2.0 * (nu - 2.0).sqrt() * log_ratio.exp() / (PI.sqrt() * (nu - 1.0)))
}

/// Log density of the unit-variance Student-t at `z`. Returns NaN for `nu <= 2`.
pub fn std_t_log_density(z: f64, nu: f64) -> f64 {
    if !(nu > 2.0) {
        return f64::NAN;
    }
    StandardizedT::new(nu)
        .map(|d| d.log_density(z))
        .unwrap_or(f64::NAN)
}

/// Precomputed constants for repeated density evaluation at fixed `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardizedT {
    nu: f64,
    log_norm: f64,
    half_nu_plus_one: f64,
    inv_nu_minus_two: f64,
    expected_abs: f64,
}

impl StandardizedT {
    pub fn new(nu: f64) -> Result<Self> {
        check_nu(nu)?;
        Ok(Self {
            nu,
            log_norm: ln_gamma((nu + 1.0) / 2.0)
                - ln_gamma(nu / 2.0)
                - 0.5 * (PI * (nu - 2.0)).ln(),
            half_nu_plus_one: (nu + 1.0) / 2.0,
            inv_nu_minus_two: 1.0 / (nu - 2.0),
            expected_abs: expected_abs_z(nu)?,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn expected_abs(&self) -> f64 {
        self.expected_abs
    }

    #[inline]
    pub fn log_density(&self, z: f64) -> f64 {
        self.log_norm - self.half_nu_plus_one * (z * z * self.inv_nu_minus_two).ln_1p()
    }

    /// Multiplier taking a classical t(nu) draw to unit variance.
    pub fn unit_scale(&self) -> f64 {
        ((self.nu - 2.0) / self.nu).sqrt()
    }
}
