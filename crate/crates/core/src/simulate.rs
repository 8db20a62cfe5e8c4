//! Equation-level data generation.
//!
//! Each kind is simulated from its own recursion (trait plus within-person
//! deviations, accumulating factors, growth factors, moving-average terms),
//! reading true values by canonical parameter name. Nothing here goes through
//! the path algebra in [`crate::moments`], so simulated moments are an
//! independent check on it.
//!
//! Individual `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`,
//! which makes the output independent of thread count.
//!
//! With `burn_in = b > 0` the within-person state starts from a draw of the
//! stationary covariance of the t=2 dynamics, runs `b` unobserved transitions
//! with the t=2 coefficients and residual covariance, and the result becomes
//! the t=1 state. Accumulating factors (DPM, LCS, GCLM) enter every burn-in
//! transition with loading 1; moving-average terms start at t=2. The t=1
//! exogenous covariances and factor–t=1 covariances of the `ModelSpec` are not used
//! in that case, only the t=1 means.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::catalog::{ModelKind, ModelSpec};
use crate::moments::{lyapunov2, spectral_radius, MomentError, STATIONARITY_MARGIN};
use crate::panel_data::PanelData;
use crate::par::{self, Execution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-stationary dynamics (spectral radius {0:.6}); burn-in needs a stable coefficient matrix")]
    NonStationary(f64),
    #[error("invalid true parameters: {0}")]
    InvalidTheta(String),
    #[error("simulation needs at least 2 individuals, got {0}")]
    TooFewIndividuals(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPlan {
    pub spec: ModelSpec,
    pub theta_true: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub execution: Execution,
}

impl SimPlan {
    pub fn new(spec: ModelSpec, theta_true: Vec<f64>, n: usize, seed: u64) -> Self {
        Self { spec, theta_true, n, seed, burn_in: 0, execution: Execution::default() }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

/// Multivariate normal sampler `mean + root·z`.
#[derive(Debug, Clone)]
struct Mvn {
    mean: DVector<f64>,
    root: DMatrix<f64>,
}

impl Mvn {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>, what: &str) -> Result<Self, SimError> {
        if let Some(ch) = cov.clone().cholesky() {
            return Ok(Self { mean, root: ch.l() });
        }
        let scale = cov.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.min() < -1e-10 * scale {
            return Err(SimError::InvalidTheta(format!("{what} covariance is not positive semi-definite")));
        }
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        Ok(Self { mean, root: eig.eigenvectors * d })
    }

    fn zero(k: usize) -> Self {
        Self { mean: DVector::zeros(k), root: DMatrix::zeros(k, k) }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let k = self.mean.len();
        let z = DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(rng)));
        &self.mean + &self.root * z
    }

    fn draw2(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        let v = self.draw(rng);
        [v[0], v[1]]
    }
}

type M2 = [[f64; 2]; 2];

fn apply(m: &M2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn cov2(m: M2) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
}

/// Everything an individual draw needs, resolved once per plan.
struct Prepared {
    kind: ModelKind,
    t: usize,
    phi: Vec<M2>,
    innov: Vec<Mvn>,
    /// α_t (intercepts) or μ_t (group means), indexed by wave.
    level: Vec<[f64; 2]>,
    loading: Vec<[f64; 2]>,
    ma: Vec<M2>,
    initial: Mvn,
    /// Joint (factor, t=1) draw when the two are correlated.
    joint: Option<Mvn>,
    factor: Mvn,
    error: Option<Mvn>,
    growth: Option<Mvn>,
    steady: Option<M2>,
    burn: Option<(M2, Mvn, Mvn)>,
    burn_in: usize,
}

fn get(spec: &ModelSpec, theta: &[f64], name: &str) -> f64 {
    spec.entry(name).map_or(0.0, |e| e.value(theta))
}

fn pair_of(spec: &ModelSpec, theta: &[f64], a: &str, b: &str) -> [f64; 2] {
    [get(spec, theta, a), get(spec, theta, b)]
}

fn block(spec: &ModelSpec, theta: &[f64], prefix: &str, suffix: &str) -> M2 {
    let c = get(spec, theta, &format!("{prefix}_cov_xy{suffix}"));
    [
        [get(spec, theta, &format!("{prefix}_var_x{suffix}")), c],
        [c, get(spec, theta, &format!("{prefix}_var_y{suffix}"))],
    ]
}

fn prepare(plan: &SimPlan) -> Result<Prepared, SimError> {
    let spec = &plan.spec;
    let theta = plan.theta_true.as_slice();
    if theta.len() != spec.free_count {
        return Err(SimError::InvalidTheta(format!("expected {} values, got {}", spec.free_count, theta.len())));
    }
    if let Some(e) = spec.params.iter().find(|e| e.role.is_variance() && e.value(theta) < 0.0) {
        return Err(SimError::InvalidTheta(format!("variance {} is negative", e.name)));
    }
    let t_max = spec.t_waves;
    let kind = spec.kind;
    let profile = spec.profile;

    let mut phi = vec![[[0.0; 2]; 2]; t_max + 1];
    let mut innov = vec![Mvn::zero(2); t_max + 1];
    let mut level = vec![[0.0; 2]; t_max + 1];
    let mut loading = vec![[1.0; 2]; t_max + 1];
    let mut ma = vec![[[0.0; 2]; 2]; t_max + 1];
    for t in 2..=t_max {
        phi[t] = spec.phi(theta, t);
        let psi = spec.psi(theta, t);
        innov[t] = Mvn::new(DVector::zeros(2), cov2(psi), &format!("residual (t={t})"))?;
        ma[t] = [
            [get(spec, theta, &format!("delta_x_t{t}")), get(spec, theta, &format!("zeta_x_t{t}"))],
            [get(spec, theta, &format!("zeta_y_t{t}")), get(spec, theta, &format!("delta_y_t{t}"))],
        ];
        if spec.entry(&format!("lambda_x_t{t}")).is_some() {
            loading[t] = pair_of(spec, theta, &format!("lambda_x_t{t}"), &format!("lambda_y_t{t}"));
        }
    }
    for t in 1..=t_max {
        level[t] = match kind {
            ModelKind::RiClpm | ModelKind::PredeterminedRiClpm | ModelKind::Starts => {
                pair_of(spec, theta, &format!("mu_x_t{t}"), &format!("mu_y_t{t}"))
            }
            _ if t == 1 => pair_of(spec, theta, "init_mean_x", "init_mean_y"),
            ModelKind::Clpm | ModelKind::Dpm | ModelKind::Gclm => {
                pair_of(spec, theta, &format!("alpha_x_t{t}"), &format!("alpha_y_t{t}"))
            }
            _ => [0.0; 2],
        };
    }

    let init_block = block(spec, theta, "init", "");
    let stationary_start = kind == ModelKind::Starts && profile.starts_stationarity;
    let initial_cov = if stationary_start {
        lyapunov2(&phi[2], &spec.psi(theta, 2)).map_err(|e| match e {
            MomentError::NonStationary(r) => SimError::NonStationary(r),
            other => SimError::InvalidTheta(other.to_string()),
        })?
    } else {
        init_block
    };
    let initial = Mvn::new(DVector::zeros(2), cov2(initial_cov), "t=1")?;

    let factor_prefix = match kind {
        ModelKind::RiClpm | ModelKind::PredeterminedRiClpm | ModelKind::Starts => Some("trait"),
        ModelKind::Dpm | ModelKind::Lcs | ModelKind::Gclm => Some("acc"),
        _ => None,
    };
    let factor_cov = factor_prefix.map_or([[0.0; 2]; 2], |p| block(spec, theta, p, ""));
    let factor_mean = if kind == ModelKind::Lcs { pair_of(spec, theta, "acc_mean_x", "acc_mean_y") } else { [0.0; 2] };
    let factor = Mvn::new(DVector::from_row_slice(&factor_mean), cov2(factor_cov), "factor")?;

    // (factor, t=1) joint blocks
    let cross_prefix = match kind {
        ModelKind::PredeterminedRiClpm => Some(("trait_init_cov_i", "")),
        ModelKind::Dpm if !profile.dpm_constrained_initial_loadings => Some(("acc_init_cov_a", "")),
        ModelKind::Lcs => Some(("acc_init_cov_a", "")),
        _ => None,
    };
    let joint = match cross_prefix {
        Some((p, _)) if plan.burn_in == 0 => {
            let mut cov = DMatrix::zeros(4, 4);
            for r in 0..2 {
                for c in 0..2 {
                    cov[(r, c)] = factor_cov[r][c];
                    cov[(2 + r, 2 + c)] = initial_cov[r][c];
                }
            }
            for (fi, f) in ["x", "y"].iter().enumerate() {
                for (vi, v) in ["x", "y"].iter().enumerate() {
                    let val = get(spec, theta, &format!("{p}{f}_{v}1"));
                    cov[(fi, 2 + vi)] = val;
                    cov[(2 + vi, fi)] = val;
                }
            }
            let mean = DVector::from_row_slice(&[factor_mean[0], factor_mean[1], 0.0, 0.0]);
            Some(Mvn::new(mean, cov, "factor and t=1")?)
        }
        _ => None,
    };

    let error = match kind {
        ModelKind::Starts | ModelKind::Lcs => {
            Some(Mvn::new(DVector::zeros(2), cov2(block(spec, theta, "err", "_t1")), "error")?)
        }
        _ => None,
    };

    let growth = if kind == ModelKind::LcmSr {
        let labels = ["ix", "sx", "iy", "sy"];
        let mean = DVector::from_iterator(4, labels.iter().map(|l| get(spec, theta, &format!("growth_mean_{l}"))));
        let cov = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                get(spec, theta, &format!("growth_var_{}", labels[i]))
            } else {
                let (a, b) = (i.min(j), i.max(j));
                get(spec, theta, &format!("growth_cov_{}_{}", labels[a], labels[b]))
            }
        });
        Some(Mvn::new(mean, cov, "growth")?)
    } else {
        None
    };

    let steady = (kind == ModelKind::Dpm && profile.dpm_constrained_initial_loadings)
        .then(|| crate::moments::inverse_i_minus(&phi[2]))
        .transpose()
        .map_err(|_| SimError::InvalidTheta("I − Φ is singular".into()))?;

    let burn = if plan.burn_in > 0 {
        let rho = spectral_radius(&phi[2]);
        if !(rho < STATIONARITY_MARGIN) {
            return Err(SimError::NonStationary(rho));
        }
        let psi = spec.psi(theta, 2);
        let stat = lyapunov2(&phi[2], &psi).map_err(|_| SimError::NonStationary(rho))?;
        Some((phi[2], Mvn::new(DVector::zeros(2), cov2(stat), "stationary")?, innov[2].clone()))
    } else {
        None
    };

    Ok(Prepared {
        kind,
        t: t_max,
        phi,
        innov,
        level,
        loading,
        ma,
        initial,
        joint,
        factor,
        error,
        growth,
        steady,
        burn,
        burn_in: plan.burn_in,
    })
}

impl Prepared {
    /// Within-person t=1 state after burn-in; `drive` is added every step.
    fn burned(&self, rng: &mut ChaCha8Rng, drive: [f64; 2]) -> [f64; 2] {
        let (phi, stat, innov) = self.burn.as_ref().expect("burn-in prepared");
        let mut z = stat.draw2(rng);
        for _ in 0..self.burn_in {
            z = add(add(apply(phi, z), drive), innov.draw2(rng));
        }
        z
    }

    /// (factor draw, t=1 within draw), joint when correlated.
    fn factor_and_initial(&self, rng: &mut ChaCha8Rng) -> ([f64; 2], [f64; 2]) {
        if let Some(j) = &self.joint {
            let v = j.draw(rng);
            return ([v[0], v[1]], [v[2], v[3]]);
        }
        let f = self.factor.draw2(rng);
        let w = if self.burn.is_some() { [0.0; 2] } else { self.initial.draw2(rng) };
        (f, w)
    }

    fn individual(&self, rng: &mut ChaCha8Rng, row: &mut [f64]) {
        let t_max = self.t;
        let mut put = |t: usize, v: [f64; 2]| {
            row[2 * (t - 1)] = v[0];
            row[2 * (t - 1) + 1] = v[1];
        };
        match self.kind {
            ModelKind::Clpm => {
                let (_, w) = self.factor_and_initial(rng);
                let w = if self.burn.is_some() { self.burned(rng, [0.0; 2]) } else { w };
                let mut x = add(self.level[1], w);
                put(1, x);
                for t in 2..=t_max {
                    x = add(add(self.level[t], apply(&self.phi[t], x)), self.innov[t].draw2(rng));
                    put(t, x);
                }
            }
            ModelKind::RiClpm | ModelKind::PredeterminedRiClpm | ModelKind::Starts => {
                let (trait_, w) = self.factor_and_initial(rng);
                let mut s = if self.burn.is_some() { self.burned(rng, [0.0; 2]) } else { w };
                for t in 1..=t_max {
                    if t > 1 {
                        s = add(apply(&self.phi[t], s), self.innov[t].draw2(rng));
                    }
                    let mut x = add(add(self.level[t], trait_), s);
                    if let Some(e) = &self.error {
                        x = add(x, e.draw2(rng));
                    }
                    put(t, x);
                }
            }
            ModelKind::Dpm => {
                let (a, w) = self.factor_and_initial(rng);
                let dev = if self.burn.is_some() {
                    self.burned(rng, a)
                } else if let Some(l) = &self.steady {
                    add(apply(l, a), w)
                } else {
                    w
                };
                let mut x = add(self.level[1], dev);
                put(1, x);
                for t in 2..=t_max {
                    x = add(add(add(self.level[t], a), apply(&self.phi[t], x)), self.innov[t].draw2(rng));
                    put(t, x);
                }
            }
            ModelKind::LcmSr => {
                let g = self.growth.as_ref().expect("growth prepared").draw(rng);
                let w = self.initial.draw2(rng);
                let mut s = if self.burn.is_some() { self.burned(rng, [0.0; 2]) } else { w };
                for t in 1..=t_max {
                    if t > 1 {
                        s = add(apply(&self.phi[t], s), self.innov[t].draw2(rng));
                    }
                    let k = (t - 1) as f64;
                    put(t, [g[0] + k * g[1] + s[0], g[2] + k * g[3] + s[1]]);
                }
            }
            ModelKind::Lcs => {
                let (a, w) = self.factor_and_initial(rng);
                let err = self.error.as_ref().expect("error prepared");
                let a_dev = [a[0] - self.factor.mean[0], a[1] - self.factor.mean[1]];
                let dev = if self.burn.is_some() { self.burned(rng, a_dev) } else { w };
                let mut f = add(self.level[1], dev);
                put(1, add(f, err.draw2(rng)));
                for t in 2..=t_max {
                    f = add(add(a, apply(&self.phi[t], f)), self.innov[t].draw2(rng));
                    put(t, add(f, err.draw2(rng)));
                }
            }
            ModelKind::Gclm => {
                let b = self.factor.draw2(rng);
                let w = if self.burn.is_some() { self.burned(rng, b) } else { self.initial.draw2(rng) };
                let mut x = add(self.level[1], w);
                put(1, x);
                let mut prev_d = [0.0; 2];
                for t in 2..=t_max {
                    let d = self.innov[t].draw2(rng);
                    let lb = [self.loading[t][0] * b[0], self.loading[t][1] * b[1]];
                    x = add(add(add(self.level[t], lb), apply(&self.phi[t], x)), add(d, apply(&self.ma[t], prev_d)));
                    prev_d = d;
                    put(t, x);
                }
            }
        }
    }
}

/// Generates a wide panel from `plan`; columns are named `x` and `y`.
pub fn simulate(plan: &SimPlan) -> Result<PanelData, SimError> {
    if plan.n < 2 {
        return Err(SimError::TooFewIndividuals(plan.n));
    }
    let prep = prepare(plan)?;
    let width = 2 * prep.t;
    let mut buf = vec![0.0; plan.n * width];
    par::for_each_chunk_mut(plan.execution, &mut buf, width, |i, row| {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(i as u64);
        prep.individual(&mut rng, row);
    });
    let values = DMatrix::from_row_slice(plan.n, width, &buf);
    let ids = (1..=plan.n).map(|i| i.to_string()).collect();
    Ok(PanelData::new("x", "y", values, ids).expect("simulated panel is well formed"))
}
