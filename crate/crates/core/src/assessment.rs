//! Fit indices, residual correlations and the trait share of variance.
//!
//! Conventions: χ² = 2(ℓ_sat − ℓ̂) = N·F with divisor-N moments; the CFI
//! baseline has free means and variances and zero covariances; SRMR covers
//! the covariance part only (i ≤ j).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::catalog::{degrees_of_freedom, ModelKind, Variable};
use crate::estimator::{FitResult, ImproperFlag};
use crate::moments::assemble_system;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssessmentError {
    #[error("fit did not converge")]
    NotConverged,
    #[error("{0} does not decompose observed variance orthogonally")]
    NotDecomposable(ModelKind),
    #[error("improper solution: {0}")]
    ImproperFit(String),
    #[error("wave {0} is out of range")]
    WaveOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexNote {
    /// df = 0: the p-value is undefined and RMSEA is reported as 0.
    ZeroDf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitIndices {
    pub chi_square: f64,
    pub df: i64,
    pub p_value: f64,
    pub cfi: f64,
    pub rmsea: f64,
    pub srmr: f64,
    pub aic: f64,
    pub bic: f64,
    pub loglik: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<IndexNote>,
}

/// Upper-tail chi-square probability.
pub fn chi_square_p_value(chi_square: f64, df: i64) -> f64 {
    if df <= 0 {
        return f64::NAN;
    }
    gamma_ur(df as f64 / 2.0, chi_square.max(0.0) / 2.0)
}

pub fn rmsea(chi_square: f64, df: i64, n: usize) -> f64 {
    if df <= 0 {
        return 0.0;
    }
    ((chi_square - df as f64).max(0.0) / (df as f64 * n as f64)).sqrt()
}

pub fn cfi(chi_square: f64, df: i64, baseline_chi_square: f64, baseline_df: i64) -> f64 {
    let model = (chi_square - df as f64).max(0.0);
    let base = (baseline_chi_square - baseline_df as f64).max(model);
    if base <= 0.0 {
        1.0
    } else {
        1.0 - model / base
    }
}

pub fn aic(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

pub fn bic(loglik: f64, k: usize, n: usize) -> f64 {
    -2.0 * loglik + k as f64 * (n as f64).ln()
}

/// `(s_ij − σ̂_ij) / sqrt(s_ii s_jj)`.
pub fn residual_correlations(result: &FitResult) -> DMatrix<f64> {
    let s = &result.moments.cov;
    let sig = &result.implied.cov;
    let p = s.nrows();
    DMatrix::from_fn(p, p, |i, j| (s[(i, j)] - sig[(i, j)]) / (s[(i, i)] * s[(j, j)]).sqrt())
}

pub fn fit_indices(result: &FitResult) -> Result<FitIndices, AssessmentError> {
    if !result.converged {
        return Err(AssessmentError::NotConverged);
    }
    let n = result.moments.n;
    let k = result.spec.free_count;
    let df = degrees_of_freedom(&result.spec);
    let chi_square = n as f64 * result.discrepancy;

    let s = &result.moments.cov;
    let p = s.nrows();
    let logdet_s =
        s.clone().cholesky().map_or(f64::NAN, |c| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>());
    let sum_log_var: f64 = (0..p).map(|i| s[(i, i)].ln()).sum();
    let baseline_chi = n as f64 * (sum_log_var - logdet_s);
    let baseline_df = (p * (p - 1) / 2) as i64;

    let r = residual_correlations(result);
    let mut ss = 0.0;
    let mut count = 0usize;
    for i in 0..p {
        for j in 0..=i {
            ss += r[(i, j)] * r[(i, j)];
            count += 1;
        }
    }
    let mut notes = Vec::new();
    if df == 0 {
        notes.push(IndexNote::ZeroDf);
    }
    Ok(FitIndices {
        chi_square,
        df,
        p_value: chi_square_p_value(chi_square, df),
        cfi: cfi(chi_square, df, baseline_chi, baseline_df),
        rmsea: rmsea(chi_square, df, n),
        srmr: (ss / count as f64).sqrt(),
        aic: aic(result.loglik, k),
        bic: bic(result.loglik, k, n),
        loglik: result.loglik,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitVarianceRatio {
    pub variable: Variable,
    pub wave: usize,
    pub trait_variance: f64,
    pub deviation_variance: f64,
    pub value: f64,
}

/// `V(I) / (V(I) + V(within at wave))`.
pub fn variance_ratio(trait_variance: f64, deviation_variance: f64) -> f64 {
    let total = trait_variance + deviation_variance;
    if total == 0.0 {
        0.0
    } else {
        trait_variance / total
    }
}

/// Share of wave-`wave` variance (net of measurement error for STARTS)
/// attributable to the stable trait of `variable`.
pub fn trait_variance_ratio(
    result: &FitResult,
    variable: Variable,
    wave: usize,
) -> Result<TraitVarianceRatio, AssessmentError> {
    let spec = &result.spec;
    if !matches!(spec.kind, ModelKind::RiClpm | ModelKind::Starts) {
        return Err(AssessmentError::NotDecomposable(spec.kind));
    }
    if wave == 0 || wave > spec.t_waves {
        return Err(AssessmentError::WaveOutOfRange(wave));
    }
    let relevant: Vec<&ImproperFlag> = result
        .improper_flags
        .iter()
        .filter(|f| match f {
            ImproperFlag::NegativeVariance { name, .. } => !name.starts_with("err_"),
            ImproperFlag::NonPositiveDefinite { .. } => true,
        })
        .collect();
    if let Some(f) = relevant.first() {
        return Err(AssessmentError::ImproperFit(f.to_string()));
    }
    let sys = assemble_system(spec, &result.theta_hat).map_err(|e| AssessmentError::ImproperFit(e.to_string()))?;
    let cov = sys.node_moments().cov;
    let v = variable.index();
    let trait_node = spec.layout.trait_nodes.expect("trait kinds carry trait nodes")[v];
    let dev_node = spec.layout.deviation_nodes[wave - 1][v];
    let trait_variance = cov[(trait_node, trait_node)];
    let deviation_variance = cov[(dev_node, dev_node)];
    Ok(TraitVarianceRatio {
        variable,
        wave,
        trait_variance,
        deviation_variance,
        value: variance_ratio(trait_variance, deviation_variance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rmsea_arithmetic() {
        assert_relative_eq!(rmsea(50.0, 40, 500), (10.0f64 / 20000.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(rmsea(50.0, 40, 500), 0.022_360_679_774_997_9, epsilon = 1e-12);
        assert_eq!(rmsea(30.0, 40, 500), 0.0);
        assert_eq!(rmsea(3.0, 0, 500), 0.0);
    }

    #[test]
    fn aic_arithmetic() {
        assert_eq!(aic(-36000.0, 22), 72044.0);
        assert_relative_eq!(bic(-36000.0, 22, 4671), 72000.0 + 22.0 * 4671f64.ln());
    }

    #[test]
    fn cfi_bounds() {
        assert_eq!(cfi(10.0, 20, 500.0, 66), 1.0);
        assert_eq!(cfi(0.0, 0, 0.0, 0), 1.0);
        assert_relative_eq!(cfi(60.0, 40, 520.0, 66), 1.0 - 20.0 / 454.0);
        assert_eq!(cfi(600.0, 40, 520.0, 66), 0.0);
    }

    #[test]
    fn p_value_known_points() {
        // df = 2: survival is exp(−x/2)
        assert_relative_eq!(chi_square_p_value(3.0, 2), (-1.5f64).exp(), epsilon = 1e-14);
        assert!(chi_square_p_value(1.0, 0).is_nan());
    }

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(variance_ratio(0.0, 0.7), 0.0);
        assert_eq!(variance_ratio(0.4, 0.4), 0.5);
        assert_relative_eq!(variance_ratio(0.3, 0.7), 0.3);
    }
}
