//! Normal-theory maximum likelihood.
//!
//! The discrepancy
//! `F = ln|Σ| − ln|S| + tr(SΣ⁻¹) − p + (m − μ)ᵀΣ⁻¹(m − μ)`
//! is minimized over unconstrained θ, so negative variance estimates remain
//! visible. The gradient is analytic: with `B = (I − A)⁻¹`, `C` the observed
//! rows of `B` and `W = Σ⁻¹ − Σ⁻¹(S + eeᵀ)Σ⁻¹`,
//!
//! - `∂F/∂S = CᵀWC`
//! - `∂F/∂A = 2 CᵀWC S Bᵀ − 2 (CᵀΣ⁻¹e)(Ba)ᵀ`
//! - `∂F/∂a = −2 CᵀΣ⁻¹e`
//!
//! chained through the parameter placements and the two nonlinear derived
//! entries (stationary t=1 block, steady-state loadings). Standard errors use
//! the observed information, a central-difference Jacobian of the analytic
//! gradient of the negative log-likelihood.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{degrees_of_freedom, Derived, ModelSpec, Target};
use crate::moments::{
    assemble_system, inverse_i_minus, lyapunov2, mat2_mul, mat2_t, phi_of, psi_of, symmetrize, ImpliedMoments,
    MomentError,
};
use crate::optimizer::{self, fd_jacobian, sup_norm, Settings};
use crate::panel_data::{sample_moments, PanelData, SampleMoments};
use crate::par::{self, Execution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("implied covariance matrix is not positive definite")]
    NonPDImplied,
    #[error("underidentified: {free} free parameters, N = {n}, df = {df}")]
    Underidentified { free: usize, n: usize, df: i64 },
    #[error("model has {model} waves but data have {data}")]
    WaveMismatch { model: usize, data: usize },
    #[error("sample covariance matrix is singular")]
    SingularSampleCovariance,
    #[error("information matrix is singular or ill-conditioned ({0})")]
    SingularInformation(String),
    #[error("fit did not converge")]
    NotConverged,
    #[error(transparent)]
    Moments(#[from] MomentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Sup-norm bound on the gradient of the discrepancy.
    pub gradient_tolerance: f64,
    pub multistart: usize,
    pub seed: u64,
    pub finite_difference_step_scale: f64,
    pub execution: Execution,
    /// Overrides the data-based start vector for the first start.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-7,
            multistart: 3,
            seed: 0,
            finite_difference_step_scale: f64::EPSILON.cbrt(),
            execution: Execution::default(),
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImproperFlag {
    NegativeVariance { name: String, value: f64 },
    NonPositiveDefinite { block: String, min_eigenvalue: f64 },
}

impl std::fmt::Display for ImproperFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImproperFlag::NegativeVariance { name, value } => write!(f, "negative variance {name} = {value:.4}"),
            ImproperFlag::NonPositiveDefinite { block, min_eigenvalue } => {
                write!(f, "{block} block not positive definite (min eigenvalue {min_eigenvalue:.4})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub theta_hat: Vec<f64>,
    /// `None` when the information matrix could not be inverted; see `se_error`.
    pub se: Option<Vec<f64>>,
    pub se_error: Option<String>,
    pub loglik: f64,
    pub discrepancy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub improper_flags: Vec<ImproperFlag>,
    pub moments: SampleMoments,
    pub implied: ImpliedMoments,
    /// Index of the start that produced the reported optimum.
    pub best_start: usize,
    /// Discrepancy at every accepted iterate of the winning start.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.moments.n
    }

    /// Estimate of the named position or entry.
    pub fn estimate(&self, name: &str) -> Option<f64> {
        if let Some(p) = self.spec.position_of(name) {
            return Some(self.theta_hat[p]);
        }
        self.spec.entry(name).map(|e| e.value(&self.theta_hat))
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let se = self.se.as_ref()?;
        let pos = self.spec.position_of(name).or_else(|| self.spec.entry(name).and_then(|e| e.position()))?;
        Some(se[pos])
    }
}

/// Precomputed sample quantities shared by every objective evaluation.
pub(crate) struct Sample<'a> {
    m: &'a SampleMoments,
    logdet_s: f64,
}

impl<'a> Sample<'a> {
    pub(crate) fn new(m: &'a SampleMoments) -> Result<Self, EstimatorError> {
        let ch = m.cov.clone().cholesky().ok_or(EstimatorError::SingularSampleCovariance)?;
        let logdet_s = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !logdet_s.is_finite() {
            return Err(EstimatorError::SingularSampleCovariance);
        }
        Ok(Self { m, logdet_s })
    }
}

struct Eval {
    f: f64,
    grad: Option<Vec<f64>>,
}

fn evaluate(spec: &ModelSpec, theta: &[f64], sample: &Sample<'_>, want_grad: bool) -> Result<Eval, EstimatorError> {
    let sys = assemble_system(spec, theta)?;
    let b = sys.total_effects();
    let c = b.select_rows(sys.observed.iter());
    let sigma = symmetrize(&c * &sys.s_mat * c.transpose());
    let mu = &c * &sys.intercepts;
    let p = sigma.nrows();
    let ch = sigma.cholesky().ok_or(EstimatorError::NonPDImplied)?;
    let logdet = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !logdet.is_finite() {
        return Err(EstimatorError::NonPDImplied);
    }
    let sinv = ch.inverse();
    let e: DVector<f64> = &sample.m.mean - &mu;
    let sinv_e = &sinv * &e;
    let tr = (&sample.m.cov * &sinv).trace();
    let f = logdet - sample.logdet_s + tr - p as f64 + e.dot(&sinv_e);
    if !want_grad {
        return Ok(Eval { f, grad: None });
    }

    let outer = &sample.m.cov + &e * e.transpose();
    let w = &sinv - &sinv * outer * &sinv;
    let g_s = c.transpose() * &w * &c;
    let v = c.transpose() * &sinv_e;
    let u = &b * &sys.intercepts;
    let g_a = (&g_s * &sys.s_mat * b.transpose()) * 2.0 - (&v * u.transpose()) * 2.0;
    let target_grad = |t: Target| match t {
        Target::Intercept(n) => -2.0 * v[n],
        Target::Path { to, from } => g_a[(to, from)],
        Target::Cov(i, j) if i == j => g_s[(i, i)],
        Target::Cov(i, j) => 2.0 * g_s[(i, j)],
    };
    let mut grad = vec![0.0; spec.free_count];
    for e in &spec.params {
        if let Some(pos) = e.position() {
            grad[pos] += e.targets.iter().map(|&t| target_grad(t)).sum::<f64>();
        }
    }
    match spec.layout.derived {
        Some(Derived::StationaryInitial { phi, psi, nodes }) => {
            let ph = phi_of(spec, theta, &phi);
            let stat = lyapunov2(&ph, &psi_of(spec, theta, &psi))?;
            let contract = |d: [[f64; 2]; 2]| {
                let mut s = 0.0;
                for r in 0..2 {
                    for cc in 0..2 {
                        s += g_s[(nodes[r], nodes[cc])] * d[r][cc];
                    }
                }
                s
            };
            for r0 in 0..2 {
                for c0 in 0..2 {
                    let Some(pos) = spec.params[phi[r0][c0]].position() else { continue };
                    let mut dphi = [[0.0; 2]; 2];
                    dphi[r0][c0] = 1.0;
                    let a = mat2_mul(&mat2_mul(&dphi, &stat), &mat2_t(&ph));
                    let rhs = [[2.0 * a[0][0], a[0][1] + a[1][0]], [a[0][1] + a[1][0], 2.0 * a[1][1]]];
                    grad[pos] += contract(lyapunov2(&ph, &rhs)?);
                }
            }
            let units = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]];
            for (k, unit) in units.iter().enumerate() {
                let Some(pos) = spec.params[psi[k]].position() else { continue };
                grad[pos] += contract(lyapunov2(&ph, unit)?);
            }
        }
        Some(Derived::SteadyStateLoading { phi, factors, initial }) => {
            let l = inverse_i_minus(&phi_of(spec, theta, &phi))?;
            for r0 in 0..2 {
                for c0 in 0..2 {
                    let Some(pos) = spec.params[phi[r0][c0]].position() else { continue };
                    // dL = L E_{r0 c0} L
                    let mut s = 0.0;
                    for r in 0..2 {
                        for cc in 0..2 {
                            s += g_a[(initial[r], factors[cc])] * l[r][r0] * l[c0][cc];
                        }
                    }
                    grad[pos] += s;
                }
            }
        }
        None => {}
    }
    Ok(Eval { f, grad: Some(grad) })
}

/// F_ML at `theta`.
pub fn fit_function_value(theta: &[f64], moments: &SampleMoments, spec: &ModelSpec) -> Result<f64, EstimatorError> {
    let sample = Sample::new(moments)?;
    Ok(evaluate(spec, theta, &sample, false)?.f)
}

/// Analytic gradient of F_ML with respect to θ.
pub fn discrepancy_gradient(
    theta: &[f64],
    moments: &SampleMoments,
    spec: &ModelSpec,
) -> Result<Vec<f64>, EstimatorError> {
    let sample = Sample::new(moments)?;
    Ok(evaluate(spec, theta, &sample, true)?.grad.expect("requested"))
}

/// Log-likelihood of the sample moments under θ.
pub fn log_likelihood(theta: &[f64], moments: &SampleMoments, spec: &ModelSpec) -> Result<f64, EstimatorError> {
    let sample = Sample::new(moments)?;
    let f = evaluate(spec, theta, &sample, false)?.f;
    Ok(loglik_from_discrepancy(f, moments, sample.logdet_s))
}

/// Saturated log-likelihood `−N/2 [p ln 2π + ln|S| + p]`.
pub fn saturated_loglik(moments: &SampleMoments) -> Result<f64, EstimatorError> {
    let sample = Sample::new(moments)?;
    let p = moments.dim() as f64;
    Ok(-0.5 * moments.n as f64 * (p * (2.0 * std::f64::consts::PI).ln() + sample.logdet_s + p))
}

fn loglik_from_discrepancy(f: f64, m: &SampleMoments, logdet_s: f64) -> f64 {
    let p = m.dim() as f64;
    // ℓ = ℓ_sat − N F / 2
    -0.5 * m.n as f64 * (p * (2.0 * std::f64::consts::PI).ln() + logdet_s + p + f)
}

/// Raw central-difference Hessian of the negative log-likelihood (not
/// symmetrized), built from the analytic gradient.
pub fn hessian_nll(
    theta: &[f64],
    moments: &SampleMoments,
    spec: &ModelSpec,
    step_scale: f64,
) -> Result<DMatrix<f64>, EstimatorError> {
    let sample = Sample::new(moments)?;
    let half_n = 0.5 * moments.n as f64;
    let grad = |p: &[f64]| {
        evaluate(spec, p, &sample, true).ok().and_then(|e| e.grad).map(|g| g.into_iter().map(|v| v * half_n).collect())
    };
    fd_jacobian(&grad, theta, step_scale).ok_or(EstimatorError::NonPDImplied)
}

/// Observed-information standard errors at `theta`.
pub fn standard_errors_at(
    theta: &[f64],
    moments: &SampleMoments,
    spec: &ModelSpec,
    step_scale: f64,
) -> Result<Vec<f64>, EstimatorError> {
    let h = hessian_nll(theta, moments, spec, step_scale)?;
    let h = symmetrize(h);
    let eig = SymmetricEigen::new(h.clone());
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    if !(lo > 0.0) || hi / lo > 1e12 {
        return Err(EstimatorError::SingularInformation(format!("eigenvalues in [{lo:.3e}, {hi:.3e}]")));
    }
    let inv =
        h.cholesky().ok_or_else(|| EstimatorError::SingularInformation("not positive definite".into()))?.inverse();
    Ok(inv.diagonal().iter().map(|v| v.sqrt()).collect())
}

/// Standard errors for a converged fit.
pub fn standard_errors(result: &FitResult) -> Result<Vec<f64>, EstimatorError> {
    if !result.converged {
        return Err(EstimatorError::NotConverged);
    }
    standard_errors_at(&result.theta_hat, &result.moments, &result.spec, f64::EPSILON.cbrt())
}

/// Negative variances and non-positive-definite factor blocks at `theta`.
pub fn detect_improper(spec: &ModelSpec, theta: &[f64]) -> Vec<ImproperFlag> {
    let mut flags = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    for e in &spec.params {
        if !e.role.is_variance() || e.position().is_none() || seen.contains(&e.group().to_string()) {
            continue;
        }
        seen.push(e.group().to_string());
        let v = e.value(theta);
        if v < 0.0 {
            flags.push(ImproperFlag::NegativeVariance { name: e.group().to_string(), value: v });
        }
    }
    for block in spec.blocks.iter().filter(|b| b.factor) {
        let k = block.members.len();
        let m = DMatrix::from_fn(k, k, |i, j| block.members[i][j].map_or(0.0, |idx| spec.params[idx].value(theta)));
        let min = SymmetricEigen::new(m).eigenvalues.min();
        if min < -1e-10 {
            flags.push(ImproperFlag::NonPositiveDefinite { block: block.label.clone(), min_eigenvalue: min });
        }
    }
    flags
}

fn jittered(start: &[f64], seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    start.iter().map(|&s| s + rng.random_range(-1.0..1.0) * (0.25 * s.abs() + 0.05)).collect()
}

/// Fits `spec` to precomputed sample moments.
pub fn fit_moments(
    spec: &ModelSpec,
    moments: &SampleMoments,
    options: &FitOptions,
) -> Result<FitResult, EstimatorError> {
    if moments.dim() != spec.p() {
        return Err(EstimatorError::WaveMismatch { model: spec.t_waves, data: moments.dim() / 2 });
    }
    let df = degrees_of_freedom(spec);
    if moments.n <= spec.free_count || df < 0 {
        return Err(EstimatorError::Underidentified { free: spec.free_count, n: moments.n, df });
    }
    let sample = Sample::new(moments)?;
    let base = options.start.clone().unwrap_or_else(|| spec.start_values(moments));
    let settings = Settings {
        max_iterations: options.max_iterations,
        gradient_tolerance: options.gradient_tolerance,
        fd_scale: options.finite_difference_step_scale,
    };
    let obj = |x: &[f64]| evaluate(spec, x, &sample, true).ok().map(|e| (e.f, e.grad.expect("requested")));
    let starts = options.multistart.max(1);
    let outcomes = par::map_indexed(options.execution, starts, |m| {
        let x0 = if m == 0 { base.clone() } else { jittered(&base, options.seed, m as u64) };
        optimizer::minimize(&obj, &x0, &settings)
    });
    let mut best: Option<(usize, optimizer::Outcome)> = None;
    for (m, out) in outcomes.into_iter().enumerate() {
        let Some(out) = out else { continue };
        let better = match &best {
            None => true,
            Some((_, b)) => (out.converged && !b.converged) || (out.converged == b.converged && out.f < b.f),
        };
        if better {
            best = Some((m, out));
        }
    }
    let (best_start, out) = best.ok_or(EstimatorError::NonPDImplied)?;
    let implied = assemble_system(spec, &out.x)?.implied();
    let (se, se_error) = if out.converged {
        match standard_errors_at(&out.x, moments, spec, options.finite_difference_step_scale) {
            Ok(se) => (Some(se), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some(EstimatorError::NotConverged.to_string()))
    };
    Ok(FitResult {
        spec: spec.clone(),
        improper_flags: detect_improper(spec, &out.x),
        loglik: loglik_from_discrepancy(out.f, moments, sample.logdet_s),
        discrepancy: out.f,
        converged: out.converged,
        iterations: out.iterations,
        gradient_norm: sup_norm(&out.grad),
        theta_hat: out.x,
        se,
        se_error,
        moments: moments.clone(),
        implied,
        best_start,
        trace: out.trace,
    })
}

/// Fits `spec` to panel data by maximum likelihood.
pub fn fit(spec: &ModelSpec, data: &PanelData, options: &FitOptions) -> Result<FitResult, EstimatorError> {
    if data.t_waves() != spec.t_waves {
        return Err(EstimatorError::WaveMismatch { model: spec.t_waves, data: data.t_waves() });
    }
    let m = sample_moments(data).map_err(|_| EstimatorError::Underidentified {
        free: spec.free_count,
        n: data.n(),
        df: degrees_of_freedom(spec),
    })?;
    fit_moments(spec, &m, options)
}
