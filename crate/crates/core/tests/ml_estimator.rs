#![allow(clippy::needless_range_loop)]

mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use panelsem::estimator::fit_moments;
use panelsem::{
    build_spec, fit, sample_moments, simulate, standard_errors, ConstraintProfile, EstimatorError, FitOptions,
    ModelKind, PanelData, SimPlan,
};

fn data(kind: ModelKind, profile: ConstraintProfile, t: usize, n: usize, seed: u64) -> PanelData {
    let spec = build_spec(kind, t, profile).unwrap();
    simulate(&SimPlan::new(spec.clone(), common::truth(&spec), n, seed)).unwrap()
}

#[test]
fn ri_clpm_estimates_lie_within_four_standard_errors() {
    let spec = build_spec(ModelKind::RiClpm, 6, ConstraintProfile::default()).unwrap();
    let truth = common::truth(&spec);
    let d = simulate(&SimPlan::new(spec.clone(), truth.clone(), 2_000, 41)).unwrap();
    let r = fit(&spec, &d, &FitOptions::default()).unwrap();
    assert!(r.converged);
    let se = r.se.as_ref().unwrap();
    for (k, name) in spec.param_names().iter().enumerate() {
        let z = (r.theta_hat[k] - truth[k]) / se[k];
        assert!(z.abs() < 4.0, "{name}: z = {z:.2}");
    }
}

#[test]
fn zero_trait_block_matches_clpm_loglik() {
    let ti = ConstraintProfile::time_invariant();
    let d = data(ModelKind::RiClpm, ti, 5, 700, 42);
    let ri = build_spec(ModelKind::RiClpm, 5, ti)
        .unwrap()
        .fix_all(&[("trait_var_x", 0.0), ("trait_var_y", 0.0), ("trait_cov_xy", 0.0)])
        .unwrap();
    let clpm = build_spec(ModelKind::Clpm, 5, ti).unwrap();
    let a = fit(&ri, &d, &FitOptions::default()).unwrap();
    let b = fit(&clpm, &d, &FitOptions::default()).unwrap();
    assert!(a.converged && b.converged);
    assert!((a.loglik - b.loglik).abs() < 1e-6, "{} vs {}", a.loglik, b.loglik);
}

#[test]
fn too_few_individuals_is_underidentified() {
    let spec = build_spec(ModelKind::RiClpm, 6, ConstraintProfile::time_invariant()).unwrap();
    let d = data(ModelKind::RiClpm, ConstraintProfile::time_invariant(), 6, 25, 43);
    assert_eq!(spec.free_count, 25);
    let err = fit(&spec, &d, &FitOptions::default()).unwrap_err();
    assert!(matches!(err, EstimatorError::Underidentified { free: 25, n: 25, .. }), "{err:?}");
}

#[test]
fn wave_mismatch() {
    let spec = build_spec(ModelKind::Clpm, 4, ConstraintProfile::default()).unwrap();
    let d = data(ModelKind::Clpm, ConstraintProfile::default(), 3, 100, 44);
    assert!(matches!(fit(&spec, &d, &FitOptions::default()), Err(EstimatorError::WaveMismatch { model: 4, data: 3 })));
}

#[test]
fn saturated_mean_has_closed_form_standard_error() {
    // the CLPM leaves the wave-1 mean and variance free, so μ̂ = x̄ and SE = sqrt(s²/N)
    let spec = build_spec(ModelKind::Clpm, 3, ConstraintProfile::default()).unwrap();
    let d = data(ModelKind::Clpm, ConstraintProfile::default(), 3, 500, 45);
    let r = fit(&spec, &d, &FitOptions::default()).unwrap();
    let m = sample_moments(&d).unwrap();
    assert_relative_eq!(r.estimate("init_mean_x").unwrap(), m.mean[0], max_relative = 1e-8);
    let expected = (m.cov[(0, 0)] / m.n as f64).sqrt();
    assert_relative_eq!(r.std_error("init_mean_x").unwrap(), expected, max_relative = 1e-6);
    let expected_y = (m.cov[(1, 1)] / m.n as f64).sqrt();
    assert_relative_eq!(r.std_error("init_mean_y").unwrap(), expected_y, max_relative = 1e-6);
    assert!(r.se.as_ref().unwrap().iter().all(|&s| s > 0.0));
}

#[test]
fn parameter_without_effect_makes_information_singular() {
    // with the accumulating factor fixed at zero its loadings do nothing
    let profile = ConstraintProfile { gclm_loadings_time_varying: true, ..ConstraintProfile::time_invariant() };
    let spec = build_spec(ModelKind::Gclm, 5, profile)
        .unwrap()
        .fix_all(&[("acc_var_x", 0.0), ("acc_var_y", 0.0), ("acc_cov_xy", 0.0)])
        .unwrap();
    assert!(spec.param_names().iter().any(|n| n.starts_with("lambda")));
    let d = data(ModelKind::Clpm, ConstraintProfile::time_invariant(), 5, 500, 46);
    let r = fit(&spec, &d, &FitOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.se.is_none());
    assert!(matches!(standard_errors(&r), Err(EstimatorError::SingularInformation(_))));
}

#[test]
fn nested_model_never_fits_better() {
    let ti = ConstraintProfile::time_invariant();
    for seed in 0..3 {
        let d = data(ModelKind::RiClpm, ti, 4, 400, 47 + seed);
        let small = fit(&build_spec(ModelKind::Clpm, 4, ti).unwrap(), &d, &FitOptions::default()).unwrap();
        let big = fit(&build_spec(ModelKind::RiClpm, 4, ti).unwrap(), &d, &FitOptions::default()).unwrap();
        assert!(big.discrepancy <= small.discrepancy + 1e-10);
        assert!(big.loglik >= small.loglik - 1e-8);
    }
}

#[test]
fn trace_never_increases_and_starts_at_the_start() {
    let spec = build_spec(ModelKind::Starts, 5, ConstraintProfile::time_invariant()).unwrap();
    let d = data(ModelKind::Starts, ConstraintProfile::time_invariant(), 5, 600, 48);
    let m = sample_moments(&d).unwrap();
    let r = fit_moments(&spec, &m, &FitOptions { multistart: 1, ..Default::default() }).unwrap();
    let f0 = panelsem::fit_function_value(&spec.start_values(&m), &m, &spec).unwrap();
    assert_relative_eq!(r.trace[0], f0, max_relative = 1e-12);
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    assert_relative_eq!(*r.trace.last().unwrap(), r.discrepancy);
}

#[test]
fn loglik_matches_the_normal_density() {
    // ℓ̂ against a direct sum of log densities at the fitted moments
    let spec = build_spec(ModelKind::RiClpm, 3, ConstraintProfile::time_invariant()).unwrap();
    let d = data(ModelKind::RiClpm, ConstraintProfile::time_invariant(), 3, 300, 49);
    let r = fit(&spec, &d, &FitOptions::default()).unwrap();
    let sigma = &r.implied.cov;
    let inv = sigma.clone().try_inverse().unwrap();
    let logdet = sigma.determinant().ln();
    let p = sigma.nrows() as f64;
    let mut direct = 0.0;
    for row in d.values().row_iter() {
        let e = DMatrix::from_fn(sigma.nrows(), 1, |i, _| row[i] - r.implied.mean[i]);
        direct += -0.5 * (p * (2.0 * std::f64::consts::PI).ln() + logdet + (e.transpose() * &inv * &e)[(0, 0)]);
    }
    assert_relative_eq!(r.loglik, direct, max_relative = 1e-10);
}

#[test]
fn fit_options_reject_unknown_keys() {
    let ok: FitOptions = toml::from_str("multistart = 5\nseed = 3").unwrap();
    assert_eq!(ok.multistart, 5);
    assert_eq!(ok.max_iterations, FitOptions::default().max_iterations);
    assert!(toml::from_str::<FitOptions>("multistrat = 5").is_err());
}
