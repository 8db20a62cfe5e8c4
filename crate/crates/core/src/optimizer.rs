//! Unconstrained minimization: BFGS on the inverse Hessian with Armijo
//! backtracking, followed when needed by damped Newton steps on a
//! finite-difference Hessian of the analytic gradient.
//!
//! The objective returns `None` where it is undefined (implied covariance not
//! positive definite); such trial points are treated as +∞ and the step is cut.

use nalgebra::{DMatrix, DVector};

pub(crate) struct Settings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub fd_scale: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at every accepted iterate, starting with the initial point.
    pub trace: Vec<f64>,
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Central-difference Jacobian of `grad` at `x`, unsymmetrized. Returns `None`
/// if any probe point leaves the domain.
pub(crate) fn fd_jacobian<G>(grad: &G, x: &[f64], scale: f64) -> Option<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let k = x.len();
    let mut h = DMatrix::zeros(k, k);
    let mut probe = x.to_vec();
    for j in 0..k {
        let step = scale * (1.0 + x[j].abs());
        probe[j] = x[j] + step;
        let up = grad(&probe)?;
        probe[j] = x[j] - step;
        let down = grad(&probe)?;
        probe[j] = x[j];
        for i in 0..k {
            h[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    Some(h)
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

struct LineResult {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn backtrack<F>(obj: &F, x: &[f64], f0: f64, g0: &[f64], dir: &[f64], first: f64) -> Option<LineResult>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let slope: f64 = g0.iter().zip(dir).map(|(a, b)| a * b).sum();
    if !(slope < 0.0) {
        return None;
    }
    let mut step = first;
    for _ in 0..MAX_HALVINGS {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + step * d).collect();
        if let Some((f, g)) = obj(&trial) {
            if f.is_finite() && f <= f0 + ARMIJO * step * slope {
                return Some(LineResult { x: trial, f, g });
            }
        }
        step *= 0.5;
    }
    None
}

pub(crate) fn minimize<F>(obj: &F, x0: &[f64], s: &Settings) -> Option<Outcome>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let k = x0.len();
    let (mut f, mut g) = obj(x0)?;
    let mut x = x0.to_vec();
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut hinv = DMatrix::<f64>::identity(k, k);
    let mut fresh = true;

    while iterations < s.max_iterations && sup_norm(&g) > s.gradient_tolerance {
        let gv = DVector::from_column_slice(&g);
        let dir: Vec<f64> = (-(&hinv * &gv)).iter().copied().collect();
        // keep the first trial step modest when the metric is still the identity
        let first = if fresh { (1.0 / sup_norm(&g).max(1e-12)).min(1.0) } else { 1.0 };
        let Some(ls) = backtrack(obj, &x, f, &g, &dir, first) else {
            if fresh {
                break;
            }
            hinv = DMatrix::identity(k, k);
            fresh = true;
            continue;
        };
        iterations += 1;
        let sv = DVector::from_iterator(k, ls.x.iter().zip(&x).map(|(a, b)| a - b));
        let yv = DVector::from_iterator(k, ls.g.iter().zip(&g).map(|(a, b)| a - b));
        let sy = sv.dot(&yv);
        let progress = f - ls.f;
        x = ls.x;
        f = ls.f;
        g = ls.g;
        trace.push(f);
        if sy > 1e-12 * sv.norm() * yv.norm() && sy > 0.0 {
            if fresh {
                // Shanno scaling of the initial metric
                hinv *= sy / yv.dot(&yv);
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            hinv += (&sv * sv.transpose()) * ((1.0 + rho * yhy) * rho)
                - (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
            fresh = false;
        }
        if progress <= 0.0 && sup_norm(sv.as_slice()) < 1e-15 {
            break;
        }
    }

    if sup_norm(&g) > s.gradient_tolerance {
        newton_polish(obj, &mut x, &mut f, &mut g, &mut trace, &mut iterations, s);
    }
    if sup_norm(&g) <= s.gradient_tolerance {
        refine(obj, &mut x, &mut f, &mut g, &mut trace, s);
    }
    let converged = sup_norm(&g) <= s.gradient_tolerance;
    Some(Outcome { x, f, grad: g, iterations, converged, trace })
}

/// One full Newton step from a converged point, kept only if it lowers both
/// the objective and the gradient norm.
fn refine<F>(obj: &F, x: &mut Vec<f64>, f: &mut f64, g: &mut Vec<f64>, trace: &mut Vec<f64>, s: &Settings)
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let grad_only = |p: &[f64]| obj(p).map(|(_, g)| g);
    let Some(h) = fd_jacobian(&grad_only, x, s.fd_scale) else { return };
    let Some(ch) = ((&h + h.transpose()) * 0.5).cholesky() else { return };
    let step = ch.solve(&(-DVector::from_column_slice(g)));
    let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
    if let Some((ft, gt)) = obj(&trial) {
        if ft <= *f && sup_norm(&gt) < sup_norm(g) {
            *x = trial;
            *f = ft;
            *g = gt;
            trace.push(ft);
        }
    }
}

fn newton_polish<F>(
    obj: &F,
    x: &mut Vec<f64>,
    f: &mut f64,
    g: &mut Vec<f64>,
    trace: &mut Vec<f64>,
    iterations: &mut usize,
    s: &Settings,
) where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let grad_only = |p: &[f64]| obj(p).map(|(_, g)| g);
    for _ in 0..50 {
        if sup_norm(g) <= s.gradient_tolerance || *iterations >= s.max_iterations {
            return;
        }
        let Some(h) = fd_jacobian(&grad_only, x, s.fd_scale) else { return };
        let h = (&h + h.transpose()) * 0.5;
        let gv = DVector::from_column_slice(g);
        let k = x.len();
        let mut dir = None;
        let mut shift = 0.0;
        let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        for _ in 0..30 {
            let m = &h + DMatrix::identity(k, k) * shift;
            if let Some(ch) = m.cholesky() {
                dir = Some(ch.solve(&(-&gv)));
                break;
            }
            shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
        }
        let Some(dir) = dir else { return };
        let dir: Vec<f64> = dir.iter().copied().collect();
        let Some(ls) = backtrack(obj, x, *f, g, &dir, 1.0) else { return };
        *iterations += 1;
        *x = ls.x;
        *f = ls.f;
        *g = ls.g;
        trace.push(*f);
    }
}
