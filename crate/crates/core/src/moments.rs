//! Path systems and model-implied moments.
//!
//! A compiled [`ModelSpec`] plus a parameter vector gives a path system over
//! latent and observed nodes: a strictly lower-triangular coefficient matrix
//! `A`, a symmetric exogenous covariance `S` and an intercept vector `a`.
//! With `B = (I − A)⁻¹` the node moments are `B a` and `B S Bᵀ`; the implied
//! moments of the observed panel are their observed rows and columns.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix4, Vector3, Vector4};
use thiserror::Error;

use crate::catalog::{Derived, ModelSpec, Target};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("non-stationary dynamics: spectral radius {0:.6} is not below 1")]
    NonStationary(f64),
    #[error("I − Φ is singular")]
    SingularSteadyState,
    #[error("parameter vector has length {got}, model expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Spectral radius below which dynamics count as stationary.
pub const STATIONARITY_MARGIN: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PathSystem {
    /// `a_mat[(to, from)]` is the path coefficient from `from` to `to`.
    pub a_mat: DMatrix<f64>,
    pub s_mat: DMatrix<f64>,
    pub intercepts: DVector<f64>,
    pub observed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpliedMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl PathSystem {
    pub fn node_count(&self) -> usize {
        self.a_mat.nrows()
    }

    /// Total effects `(I − A)⁻¹`.
    pub fn total_effects(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let ia = DMatrix::identity(n, n) - &self.a_mat;
        ia.solve_lower_triangular(&DMatrix::identity(n, n)).expect("unit lower-triangular system is invertible")
    }

    /// Means and covariance of every node.
    pub fn node_moments(&self) -> ImpliedMoments {
        let b = self.total_effects();
        let cov = &b * &self.s_mat * b.transpose();
        ImpliedMoments { mean: &b * &self.intercepts, cov: symmetrize(cov) }
    }

    pub fn implied(&self) -> ImpliedMoments {
        let b = self.total_effects();
        let c = b.select_rows(self.observed.iter());
        let cov = &c * &self.s_mat * c.transpose();
        ImpliedMoments { mean: &c * &self.intercepts, cov: symmetrize(cov) }
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn place(a: &mut DMatrix<f64>, s: &mut DMatrix<f64>, ints: &mut DVector<f64>, target: Target, v: f64) {
    match target {
        Target::Intercept(n) => ints[n] += v,
        Target::Path { to, from } => a[(to, from)] += v,
        Target::Cov(i, j) => {
            s[(i, j)] += v;
            if i != j {
                s[(j, i)] += v;
            }
        }
    }
}

pub(crate) fn phi_of(spec: &ModelSpec, theta: &[f64], idx: &[[usize; 2]; 2]) -> [[f64; 2]; 2] {
    let v = |i: usize| spec.params[i].value(theta);
    [[v(idx[0][0]), v(idx[0][1])], [v(idx[1][0]), v(idx[1][1])]]
}

pub(crate) fn psi_of(spec: &ModelSpec, theta: &[f64], idx: &[usize; 3]) -> [[f64; 2]; 2] {
    let v = |i: usize| spec.params[i].value(theta);
    [[v(idx[0]), v(idx[1])], [v(idx[1]), v(idx[2])]]
}

/// Builds the path system for `spec` at `theta`.
pub fn assemble_system(spec: &ModelSpec, theta: &[f64]) -> Result<PathSystem, MomentError> {
    if theta.len() != spec.free_count {
        return Err(MomentError::LengthMismatch { expected: spec.free_count, got: theta.len() });
    }
    let n = spec.layout.nodes.len();
    let mut a = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    let mut ints = DVector::zeros(n);
    for &(t, v) in &spec.layout.fixed {
        place(&mut a, &mut s, &mut ints, t, v);
    }
    for e in &spec.params {
        let v = e.value(theta);
        for &t in &e.targets {
            place(&mut a, &mut s, &mut ints, t, v);
        }
    }
    match spec.layout.derived {
        Some(Derived::StationaryInitial { phi, psi, nodes }) => {
            let st = lyapunov2(&phi_of(spec, theta, &phi), &psi_of(spec, theta, &psi))?;
            for r in 0..2 {
                for c in 0..2 {
                    s[(nodes[r], nodes[c])] = st[r][c];
                }
            }
        }
        Some(Derived::SteadyStateLoading { phi, factors, initial }) => {
            let l = inverse_i_minus(&phi_of(spec, theta, &phi))?;
            for r in 0..2 {
                for c in 0..2 {
                    a[(initial[r], factors[c])] = l[r][c];
                }
            }
        }
        None => {}
    }
    Ok(PathSystem { a_mat: a, s_mat: s, intercepts: ints, observed: spec.layout.observed.clone() })
}

pub fn implied_moments(spec: &ModelSpec, theta: &[f64]) -> Result<ImpliedMoments, MomentError> {
    Ok(assemble_system(spec, theta)?.implied())
}

/// Largest eigenvalue modulus of a 2×2 matrix.
pub fn spectral_radius(phi: &[[f64; 2]; 2]) -> f64 {
    let tr = phi[0][0] + phi[1][1];
    let det = phi[0][0] * phi[1][1] - phi[0][1] * phi[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        (tr / 2.0 + r).abs().max((tr / 2.0 - r).abs())
    } else {
        det.abs().sqrt()
    }
}

/// Stationary covariance Ψ solving `Ψ = Φ Ψ Φᵀ + ψ`, via the Kronecker form
/// `(I − Φ ⊗ Φ) vec Ψ = vec ψ`.
pub fn solve_stationary_covariance(phi: &Matrix2<f64>, psi: &Matrix2<f64>) -> Result<Matrix2<f64>, MomentError> {
    let rho = spectral_radius(&[[phi[(0, 0)], phi[(0, 1)]], [phi[(1, 0)], phi[(1, 1)]]]);
    if !(rho < STATIONARITY_MARGIN) {
        return Err(MomentError::NonStationary(rho));
    }
    let k = phi.kronecker(phi);
    let m = Matrix4::identity() - k;
    // column-major vec
    let rhs = Vector4::new(psi[(0, 0)], psi[(1, 0)], psi[(0, 1)], psi[(1, 1)]);
    let v = m.lu().solve(&rhs).ok_or(MomentError::NonStationary(rho))?;
    let out = Matrix2::new(v[0], v[2], v[1], v[3]);
    Ok((out + out.transpose()) * 0.5)
}

/// Symmetric 3-unknown form of the same equation, used on the hot path.
pub(crate) fn lyapunov2(phi: &[[f64; 2]; 2], psi: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2], MomentError> {
    let rho = spectral_radius(phi);
    if !(rho < STATIONARITY_MARGIN) {
        return Err(MomentError::NonStationary(rho));
    }
    let [[a, b], [c, d]] = *phi;
    let m = Matrix3::identity()
        - Matrix3::new(a * a, 2.0 * a * b, b * b, a * c, a * d + b * c, b * d, c * c, 2.0 * c * d, d * d);
    let rhs = Vector3::new(psi[0][0], psi[0][1], psi[1][1]);
    let v = m.lu().solve(&rhs).ok_or(MomentError::NonStationary(rho))?;
    Ok([[v[0], v[1]], [v[1], v[2]]])
}

/// `(I − Φ)⁻¹`, the long-run response of the state to a constant input.
/// Only meaningful for stable dynamics, so Φ must have spectral radius below 1.
pub fn steady_state_loading(phi: &Matrix2<f64>) -> Result<Matrix2<f64>, MomentError> {
    let phi = [[phi[(0, 0)], phi[(0, 1)]], [phi[(1, 0)], phi[(1, 1)]]];
    let rho = spectral_radius(&phi);
    if !(rho < STATIONARITY_MARGIN) {
        return Err(MomentError::NonStationary(rho));
    }
    let l = inverse_i_minus(&phi)?;
    Ok(Matrix2::new(l[0][0], l[0][1], l[1][0], l[1][1]))
}

pub(crate) fn inverse_i_minus(phi: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2], MomentError> {
    let (a, b, c, d) = (1.0 - phi[0][0], -phi[0][1], -phi[1][0], 1.0 - phi[1][1]);
    let det = a * d - b * c;
    if det.abs() < 1e-12 {
        return Err(MomentError::SingularSteadyState);
    }
    Ok([[d / det, -b / det], [-c / det, a / det]])
}

pub(crate) fn mat2_mul(x: &[[f64; 2]; 2], y: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    out
}

pub(crate) fn mat2_t(x: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[x[0][0], x[1][0]], [x[0][1], x[1][1]]]
}
