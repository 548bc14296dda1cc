//! Derivative-free coarse search followed by a BFGS polish with
//! central-difference gradients.

use nalgebra::{DMatrix, DVector};

/// `cbrt(machine epsilon)`, the central-difference step scale.
pub(crate) fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Five-point central-difference gradient.
pub(crate) fn central_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut at = |i: usize, d: f64| {
        xp[i] = x[i] + d;
        let v = f(&xp);
        xp[i] = x[i];
        v
    };
    (0..x.len())
        .map(|i| {
            let h = fd_step(x[i]);
            let (p2, p1, m1, m2) = (at(i, 2.0 * h), at(i, h), at(i, -h), at(i, -2.0 * h));
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    /// Relative improvement of the objective between iterations.
    pub rel_improvement: f64,
    pub grad_norm: f64,
    pub max_iter: usize,
    /// Consecutive sub-tolerance iterations that count as a stall.
    pub stall_iters: usize,
    /// Largest gradient norm accepted at a stall.
    pub stall_grad_norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel_improvement: 1e-10,
            grad_norm: 1e-6,
            max_iter: 1000,
            stall_iters: 10,
            stall_grad_norm: 1e-2,
        }
    }
}

/// Why the polish stopped successfully.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stop {
    /// Both the improvement and the gradient tolerance were met.
    Gradient,
    /// No further decrease is available but the finite-difference gradient
    /// stays above tolerance, as at a kink of the objective.
    Stalled,
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub stop: Option<Stop>,
}

/// Nelder-Mead with standard coefficients. Stops after `max_evals`
/// evaluations or once the simplex has collapsed.
pub(crate) fn nelder_mead(
    f: &impl Fn(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = n + 1;

    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect()
    };

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let (best, worst) = (values[0], values[n]);
        let spread = (worst - best).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if best.is_finite() && spread <= 1e-14 * best.abs().max(1e-10) && size < 1e-10 {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();

        let reflected = point(&centroid, &simplex[n], -1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < values[0] {
            let expanded = point(&centroid, &simplex[n], -2.0);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = point(&centroid, &simplex[n], -0.5);
            let v = f(&c);
            (c, v)
        } else {
            let c = point(&centroid, &simplex[n], 0.5);
            let v = f(&c);
            (c, v)
        };
        evals += 1;
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            simplex[i] = point(&simplex[0], &simplex[i], 0.5);
            values[i] = f(&simplex[i]);
        }
        evals += n;
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    (simplex[best].clone(), values[best])
}

/// BFGS on the inverse Hessian with Armijo backtracking.
pub(crate) fn bfgs(f: &impl Fn(&[f64]) -> f64, x0: &[f64], tol: Tolerances) -> Minimum {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut g = DVector::from_vec(central_gradient(f, x.as_slice()));
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut rel = f64::INFINITY;
    let mut iterations = 0;
    let mut flat = 0;
    let mut exhausted = false;

    let done = |g: &DVector<f64>, rel: f64| g.norm() < tol.grad_norm && rel < tol.rel_improvement;

    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum {
            x: x0.to_vec(),
            f: fx,
            grad_norm: f64::INFINITY,
            iterations,
            stop: None,
        };
    }

    while iterations < tol.max_iter {
        if done(&g, rel) || flat >= tol.stall_iters {
            break;
        }
        iterations += 1;

        let mut p = -(&h_inv * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            h_inv = DMatrix::identity(n, n);
            fresh = true;
            p = -g.clone();
            slope = g.dot(&p);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + step * &p;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }

        let Some((x_new, f_new)) = accepted else {
            if fresh {
                // steepest descent failed too: no further improvement possible
                rel = 0.0;
                exhausted = true;
                break;
            }
            h_inv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };

        let g_new = DVector::from_vec(central_gradient(f, x_new.as_slice()));
        if g_new.iter().any(|v| !v.is_finite()) {
            break;
        }
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h_inv *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            h_inv += ((1.0 + rho * yhy) * rho) * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
        }

        rel = (fx - f_new) / fx.abs().max(f64::MIN_POSITIVE);
        flat = if rel < tol.rel_improvement { flat + 1 } else { 0 };
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    let stop = if done(&g, rel) {
        Some(Stop::Gradient)
    } else if (exhausted || flat >= tol.stall_iters) && g.norm() < tol.stall_grad_norm {
        Some(Stop::Stalled)
    } else {
        None
    };
    Minimum {
        x: x.as_slice().to_vec(),
        f: fx,
        grad_norm: g.norm(),
        iterations,
        stop,
    }
}
