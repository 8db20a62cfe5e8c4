#![allow(dead_code)]

use std::io::Write;

use nalgebra::DMatrix;
use panelsem::catalog::{ParamEntry, ParamRole, Variable};
use panelsem::{build_spec, ConstraintProfile, ModelKind, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A fixed, stationary, proper parameter value for any entry.
pub fn truth_value(e: &ParamEntry) -> f64 {
    let x = e.variable != Some(Variable::Y);
    let t = e.wave.unwrap_or(1) as f64;
    let pick = |a: f64, b: f64| if x { a } else { b };
    match e.role {
        ParamRole::Autoregressive => pick(0.4, 0.3),
        ParamRole::CrossLagged => pick(0.1, 0.15),
        ParamRole::MovingAverage => 0.2,
        ParamRole::CrossLaggedMovingAverage => 0.05,
        ParamRole::Loading => 1.0 + 0.1 * (t - 2.0),
        ParamRole::ResidualVariance => pick(1.0, 0.8),
        ParamRole::ResidualCovariance => 0.2,
        ParamRole::TraitVariance => pick(1.0, 0.8),
        ParamRole::TraitCovariance => 0.3,
        ParamRole::AccumulatingVariance => pick(0.5, 0.4),
        ParamRole::AccumulatingCovariance => 0.1,
        ParamRole::AccumulatingMean => pick(0.5, -0.3),
        ParamRole::ErrorVariance => pick(0.5, 0.4),
        ParamRole::ErrorCovariance => 0.1,
        ParamRole::ExogenousMean => pick(1.0, 2.0),
        ParamRole::ExogenousVariance => pick(1.5, 1.2),
        ParamRole::ExogenousCovariance => 0.3,
        ParamRole::Intercept => pick(0.5, 0.3) + 0.05 * t,
        ParamRole::GroupMean => pick(1.0 + 0.1 * t, 2.0 - 0.05 * t),
        ParamRole::FactorInitialCovariance => 0.15,
        ParamRole::GrowthMean => match e.name.as_str() {
            "growth_mean_ix" => 2.0,
            "growth_mean_sx" => 0.3,
            "growth_mean_iy" => 1.0,
            _ => -0.2,
        },
        ParamRole::GrowthVariance => match e.name.as_str() {
            "growth_var_ix" => 1.0,
            "growth_var_sx" => 0.1,
            "growth_var_iy" => 0.8,
            _ => 0.05,
        },
        ParamRole::GrowthCovariance => 0.02,
    }
}

pub fn truth(spec: &ModelSpec) -> Vec<f64> {
    spec.theta_from(truth_value)
}

/// Richer-than-default profile per kind so optional paths are exercised.
pub fn exercise_profile(kind: ModelKind) -> ConstraintProfile {
    match kind {
        ModelKind::Gclm => ConstraintProfile { gclm_include_ma: true, ..ConstraintProfile::default() },
        _ => ConstraintProfile::default(),
    }
}

pub fn min_spec(kind: ModelKind, profile: ConstraintProfile) -> ModelSpec {
    let t = panelsem::min_waves(kind, &profile).unwrap();
    build_spec(kind, t, profile).unwrap()
}

/// θ perturbed multiplicatively within ±30%, keeping every coefficient small
/// enough for stationarity.
pub fn random_theta(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    spec.theta_from(|e| {
        truth_value(e) * rng.random_range(0.7..1.3)
            + if e.role.is_variance() { 0.0 } else { rng.random_range(-0.05..0.05) }
    })
}

/// Five-point central difference of a scalar function.
pub fn five_point_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h_scale: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = h_scale * (1.0 + x[j].abs());
            let mut at = |d: f64| {
                probe[j] = x[j] + d;
                let v = f(&probe);
                probe[j] = x[j];
                v
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

/// Monte Carlo standard errors of sample means and divisor-N covariances:
/// `sqrt(s_jj / N)` and `sqrt(Var[(x_i − m_i)(x_j − m_j)] / N)`.
pub fn moment_standard_errors(values: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = values.nrows();
    let p = values.ncols();
    let nf = n as f64;
    let means: Vec<f64> = (0..p).map(|j| values.column(j).sum() / nf).collect();
    let mut centered = values.clone();
    for j in 0..p {
        centered.column_mut(j).iter_mut().for_each(|v| *v -= means[j]);
    }
    let mean_se: Vec<f64> = (0..p).map(|j| (centered.column(j).norm_squared() / nf / nf).sqrt()).collect();
    let mut cov_se = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let prod = centered.column(i).component_mul(&centered.column(j));
            let m = prod.sum() / nf;
            let var = prod.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf;
            cov_se[(i, j)] = (var / nf).sqrt();
            cov_se[(j, i)] = cov_se[(i, j)];
        }
    }
    (mean_se, cov_se)
}

/// One line per acceptance criterion, written past the test harness capture.
pub fn report(criterion: u32, title: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "criterion {criterion:>2} [{status}] {title}: {detail}");
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
