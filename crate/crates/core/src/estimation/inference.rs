//! Sandwich covariance, coefficient tests and information criteria.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::optim::fd_step;
use crate::error::{Error, Result};

/// Significance levels at which rejections are reported.
pub const SIGNIFICANCE_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

/// Covariance estimates at a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    /// `H⁻¹ S H⁻¹ / n`.
    pub robust: DMatrix<f64>,
    /// `(-H)⁻¹ / n`.
    pub hessian_only: DMatrix<f64>,
    /// Hessian of the mean per-observation log-likelihood.
    pub hessian: DMatrix<f64>,
    /// Mean outer product of per-observation scores.
    pub outer_product: DMatrix<f64>,
}

impl Covariance {
    pub fn robust_se(&self) -> Vec<f64> {
        self.robust.diagonal().iter().map(|v| v.sqrt()).collect()
    }

    pub fn hessian_se(&self) -> Vec<f64> {
        self.hessian_only.diagonal().iter().map(|v| v.sqrt()).collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sandwich covariance of the maximizer of `Σ_t terms(θ)[t]`.
///
/// Derivatives are central differences with step
/// `cbrt(eps) * max(1, |θ_k|)`; the Hessian is taken of the mean term and
/// its off-diagonal entries use the four-point formula.
pub fn sandwich(theta: &[f64], terms: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Covariance> {
    let k = theta.len();
    let base = terms(theta)?;
    let n = base.len();
    if n == 0 || k == 0 {
        return Err(Error::InvalidInput("sandwich needs observations and parameters".into()));
    }
    let f0 = mean(&base);
    let h: Vec<f64> = theta.iter().map(|&v| fd_step(v)).collect();

    let at = |shifts: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut x = theta.to_vec();
        for &(i, d) in shifts {
            x[i] += d;
        }
        let t = terms(&x)?;
        if t.len() != n {
            return Err(Error::InvalidInput("term count changed under perturbation".into()));
        }
        Ok(t)
    };

    let mut plus = Vec::with_capacity(k);
    let mut minus = Vec::with_capacity(k);
    for i in 0..k {
        plus.push(at(&[(i, h[i])])?);
        minus.push(at(&[(i, -h[i])])?);
    }

    let mut hess = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        hess[(i, i)] = (mean(&plus[i]) - 2.0 * f0 + mean(&minus[i])) / (h[i] * h[i]);
        for j in 0..i {
            let pp = mean(&at(&[(i, h[i]), (j, h[j])])?);
            let pm = mean(&at(&[(i, h[i]), (j, -h[j])])?);
            let mp = mean(&at(&[(i, -h[i]), (j, h[j])])?);
            let mm = mean(&at(&[(i, -h[i]), (j, -h[j])])?);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }

    let mut outer = DMatrix::<f64>::zeros(k, k);
    let mut g = vec![0.0; k];
    for t in 0..n {
        for i in 0..k {
            g[i] = (plus[i][t] - minus[i][t]) / (2.0 * h[i]);
        }
        for i in 0..k {
            for j in 0..=i {
                outer[(i, j)] += g[i] * g[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            outer[(j, i)] = outer[(i, j)];
        }
    }
    outer /= n as f64;

    if hess.iter().any(|v| !v.is_finite()) || outer.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite derivatives".into()));
    }
    let neg = -&hess;
    let neg_inv = neg
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("Hessian is not negative definite".into()))?;
    let h_inv = -&neg_inv;
    let robust = &h_inv * &outer * &h_inv / n as f64;
    let hessian_only = neg_inv / n as f64;
    if robust.diagonal().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Singular("non-positive robust variance".into()));
    }
    Ok(Covariance {
        robust,
        hessian_only,
        hessian: hess,
        outer_product: outer,
    })
}

/// Per-observation information criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub akaike: f64,
    pub bayes: f64,
    pub shibata: f64,
    pub hannan_quinn: f64,
}

impl InformationCriteria {
    pub fn values(&self) -> [f64; 4] {
        [self.akaike, self.bayes, self.shibata, self.hannan_quinn]
    }

    pub const NAMES: [&'static str; 4] = ["Akaike", "Bayes", "Shibata", "Hannan-Quinn"];
}

pub fn information_criteria(log_likelihood: f64, k: usize, n: usize) -> Result<InformationCriteria> {
    if n <= 2 * k || n < 3 {
        return Err(Error::InvalidInput(format!(
            "information criteria need n > 2k and n >= 3 (n = {n}, k = {k})"
        )));
    }
    let (nf, kf) = (n as f64, k as f64);
    let dev = -2.0 * log_likelihood;
    let ic = InformationCriteria {
        akaike: (dev + 2.0 * kf) / nf,
        bayes: (dev + kf * nf.ln()) / nf,
        shibata: (dev + nf * ((nf + 2.0 * kf) / nf).ln()) / nf,
        hannan_quinn: (dev + 2.0 * kf * nf.ln().ln()) / nf,
    };
    if ic.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite log-likelihood".into()));
    }
    Ok(ic)
}

/// Per criterion, whether `a` is preferred to `b` (lower value).
pub fn ic_preference(a: &InformationCriteria, b: &InformationCriteria) -> [bool; 4] {
    let (a, b) = (a.values(), b.values());
    [a[0] < b[0], a[1] < b[1], a[2] < b[2], a[3] < b[3]]
}

/// Two-sided p-value of `t` against Student-t with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    let a = t.abs();
    let tail = if df.is_infinite() {
        Normal::standard().sf(a)
    } else {
        match StudentsT::new(0.0, 1.0, df) {
            Ok(d) => d.sf(a),
            Err(_) => f64::NAN,
        }
    };
    (2.0 * tail).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Forks do not move the mean return.
    #[serde(rename = "H1_mean")]
    H1Mean,
    /// Forks do not move the conditional variance.
    #[serde(rename = "H2_variance")]
    H2Variance,
}

impl Hypothesis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Hypothesis::H1Mean => "H1_mean",
            Hypothesis::H2Variance => "H2_variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisOutcome {
    pub name: Hypothesis,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    /// Levels from [`SIGNIFICANCE_LEVELS`] at which the null is rejected.
    pub reject_at: Vec<f64>,
}

impl HypothesisOutcome {
    pub fn new(name: Hypothesis, coefficient: f64, std_error: f64, df: f64) -> Self {
        let t_value = coefficient / std_error;
        let p_value = two_sided_p(t_value, df);
        Self {
            name,
            coefficient,
            std_error,
            t_value,
            p_value,
            reject_at: reject_levels(p_value),
        }
    }

    pub fn rejects_at(&self, level: f64) -> bool {
        self.p_value < level
    }
}

pub fn reject_levels(p: f64) -> Vec<f64> {
    SIGNIFICANCE_LEVELS.iter().copied().filter(|&a| p < a).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_sandwich_is_analytic() {
        // terms_t(θ) = -(1/2)(θ - x_t)' A (θ - x_t), with x_t near θ
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let xs: Vec<[f64; 2]> = (0..50)
            .map(|i| {
                let u = i as f64 / 50.0;
                [0.3 + 0.1 * (7.0 * u).sin(), -0.2 + 0.1 * ((3.0 * u).cos() + u)]
            })
            .collect();
        let theta = [0.3, -0.2];
        let a2 = a.clone();
        let terms = move |th: &[f64]| -> Result<Vec<f64>> {
            Ok(xs
                .iter()
                .map(|x| {
                    let d = [th[0] - x[0], th[1] - x[1]];
                    -0.5 * (a2[(0, 0)] * d[0] * d[0] + 2.0 * a2[(0, 1)] * d[0] * d[1] + a2[(1, 1)] * d[1] * d[1])
                })
                .collect())
        };
        let cov = sandwich(&theta, &terms).unwrap();

        // analytic: H = -A, g_t = A (x_t - θ), S = mean g g'
        let xs: Vec<[f64; 2]> = (0..50)
            .map(|i| {
                let u = i as f64 / 50.0;
                [0.3 + 0.1 * (7.0 * u).sin(), -0.2 + 0.1 * ((3.0 * u).cos() + u)]
            })
            .collect();
        let mut s = DMatrix::<f64>::zeros(2, 2);
        for x in &xs {
            let d = nalgebra::DVector::from_vec(vec![x[0] - theta[0], x[1] - theta[1]]);
            let g = &a * d;
            s += &g * g.transpose();
        }
        s /= 50.0;
        let ainv = a.clone().try_inverse().unwrap();
        let expected = &ainv * s * &ainv / 50.0;
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(cov.robust[(i, j)], expected[(i, j)], max_relative = 1e-6);
                assert_relative_eq!(cov.hessian[(i, j)], -a[(i, j)], max_relative = 1e-6);
                assert_relative_eq!(cov.hessian_only[(i, j)], ainv[(i, j)] / 50.0, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn flat_objective_is_singular() {
        let terms = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![1.0; 10]) };
        assert!(matches!(sandwich(&[0.0], terms), Err(Error::Singular(_))));
    }

    #[test]
    fn information_criteria_arithmetic() {
        let ic = information_criteria(5825.0, 6, 2297).unwrap();
        assert!((ic.akaike - -5.066_608_619_939_051).abs() < 1e-12);
        let zero = information_criteria(0.0, 0, 100).unwrap();
        assert_eq!(zero.values(), [0.0; 4]);
        assert!(information_criteria(1.0, 6, 12).is_err());
        assert!(information_criteria(f64::NAN, 1, 100).is_err());
    }

    #[test]
    fn p_values() {
        assert!((two_sided_p(2.533, 1e6) - 0.0113).abs() < 1e-4);
        assert!((two_sided_p(-1.354, 1e6) - 0.176).abs() < 1e-3);
        assert_eq!(two_sided_p(0.0, 50.0), 1.0);
        let o = HypothesisOutcome::new(Hypothesis::H2Variance, 2.533, 1.0, 2290.0);
        assert_eq!(o.reject_at, vec![0.10, 0.05]);
        let o = HypothesisOutcome::new(Hypothesis::H1Mean, 0.0, 0.3, 2290.0);
        assert_eq!(o.p_value, 1.0);
        assert!(o.reject_at.is_empty());
    }

    proptest::proptest! {
        #[test]
        fn p_is_symmetric(t in -50.0f64..50.0, df in 1.0f64..5000.0) {
            let p = two_sided_p(t, df);
            proptest::prop_assert_eq!(p, two_sided_p(-t, df));
            proptest::prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn reject_set_matches_p(p in 0.0f64..1.0) {
            let r = reject_levels(p);
            for a in SIGNIFICANCE_LEVELS {
                proptest::prop_assert_eq!(r.contains(&a), p < a);
            }
        }
    }
}
