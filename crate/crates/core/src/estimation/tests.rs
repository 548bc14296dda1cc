use super::*;
use crate::egarch::{periodic_events, simulate, synthetic_dates};
use crate::events::EventRegressors;
use chrono::NaiveDate;

fn truth() -> ParameterSet {
    ParameterSet {
        mu: 0.001,
        omega: -0.15,
        alpha: 0.05,
        gamma: 0.2,
        beta: 0.97,
        delta_fork_variance: Some(0.2),
        ..Default::default()
    }
}

fn var_spec() -> ModelSpec {
    ModelSpec::new(false, DummyLocation::Variance)
}

fn sample(n: usize, seed: u64) -> (ModelData, EventRegressors) {
    let dates = synthetic_dates(NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(), n);
    let regs = periodic_events(&dates, 20, 3);
    let sim = simulate(&truth(), &var_spec(), &regs, None, n, seed).unwrap();
    (ModelData::new(&sim.returns, None, &regs).unwrap(), regs)
}

#[test]
fn transform_round_trip() {
    let spec = ModelSpec {
        estimate_nu: true,
        ..ModelSpec::new(true, DummyLocation::Variance)
    };
    let tr = Transform::new(&spec);
    let theta = [0.001, 0.9, -0.15, 0.05, 0.2, 0.97, 0.2, 6.5];
    let back = tr.to_natural(&tr.to_free(&theta));
    for (a, b) in theta.iter().zip(&back) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn recovers_simulated_parameters() {
    let (data, _) = sample(3000, 42);
    let fit = fit(&data, &var_spec()).unwrap();
    assert!(fit.convergence.converged);
    assert_eq!(fit.k(), 6);
    let t = truth().to_vec(&var_spec());
    for (c, truth) in fit.coefficients.iter().zip(t) {
        assert!(
            (c.estimate - truth).abs() < 4.0 * c.std_error,
            "{} = {} (se {}) vs {truth}",
            c.name,
            c.estimate,
            c.std_error
        );
        assert!((0.0..=1.0).contains(&c.p_value));
    }

    // the reported likelihood is the filter's, recomputed from scratch
    let recomputed = crate::egarch::log_likelihood_terms(&data, &fit.params, &fit.spec)
        .unwrap()
        .iter()
        .sum::<f64>();
    assert!((fit.log_likelihood - recomputed).abs() < 1e-10);
    let ic = information_criteria(fit.log_likelihood, 6, 3000).unwrap();
    assert_eq!(ic, fit.ic);

    let json = fit.to_json().unwrap();
    assert_eq!(FitResult::from_json(&json).unwrap(), fit);

    let h = test_hypotheses(&fit).unwrap();
    assert_eq!(h.len(), 1);
    assert_eq!(h[0].name, Hypothesis::H2Variance);

    let table = render_fit_table(&fit);
    assert!(table.starts_with("Parameter"));
    assert!(table.contains("Std. Error (in %)"));
    assert_eq!(fit_csv(&fit).lines().count(), 7);
}

#[test]
fn location_shift_moves_only_mu() {
    let (data, _) = sample(1500, 3);
    let c = 0.05;
    let a = fit(&data, &var_spec()).unwrap();
    let b = fit(&data.shifted(c), &var_spec()).unwrap();
    assert!((b.params.mu - a.params.mu - c).abs() < 1e-6);
    for name in [ParamName::Omega, ParamName::Alpha, ParamName::Gamma, ParamName::Beta, ParamName::DeltaForkVariance] {
        let (x, y) = (a.params.get(name).unwrap(), b.params.get(name).unwrap());
        assert!((x - y).abs() < 1e-4, "{name}: {x} vs {y}");
    }
}

#[test]
fn parallel_and_sequential_agree() {
    let (data, _) = sample(800, 9);
    let par = fit(&data, &var_spec()).unwrap();
    let seq = fit_with(
        &data,
        &var_spec(),
        &FitOptions {
            parallel: false,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(par, seq);
}

#[test]
fn rejects_short_samples_and_untestable_specs() {
    let (data, regs) = sample(200, 1);
    assert!(matches!(fit(&data, &var_spec()), Err(Error::InvalidInput(_))));
    let _ = regs;

    let (data, _) = sample(600, 1);
    let plain = fit(&data, &ModelSpec::default()).unwrap();
    assert!(test_hypotheses(&plain).is_err());
    assert!(fit_with(&data, &var_spec(), &FitOptions { starts: 0, ..Default::default() }).is_err());
}

#[test]
fn failure_carries_diagnostics() {
    let (data, _) = sample(600, 1);
    let opts = FitOptions {
        max_iter: 1,
        simplex_evals_per_param: 1,
        ..Default::default()
    };
    match fit_with(&data, &var_spec(), &opts) {
        Err(Error::Estimation(f)) => {
            assert_eq!(f.starts.len(), 5);
            assert!(f.best_params.is_some());
            assert!(f.to_string().contains("variance_noindex"));
        }
        other => panic!("expected estimation failure, got {other:?}"),
    }
}

