//! Pairwise equivalence checks and multi-model comparison tables.
//!
//! Coefficients are matched across models by (role, variable, wave), since
//! the same β or γ carries different entry names in different models.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assessment::{fit_indices, FitIndices};
use crate::catalog::{degrees_of_freedom, ModelDescriptor, ModelSpec, ParamRole, Variable};
use crate::estimator::{fit, EstimatorError, FitOptions, FitResult};
use crate::panel_data::PanelData;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub coef: f64,
    pub se: f64,
    pub loglik: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { coef: 1e-4, se: 1e-4, loglik: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Equivalent,
    NotEquivalent,
    /// A fit failed to converge or lacked standard errors.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedCoefficient {
    pub role: ParamRole,
    pub variable: Option<Variable>,
    pub wave: Option<usize>,
    pub estimate_a: f64,
    pub estimate_b: f64,
    pub se_a: Option<f64>,
    pub se_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub model_a: ModelDescriptor,
    pub model_b: ModelDescriptor,
    pub label_a: String,
    pub label_b: String,
    pub loglik_a: f64,
    pub loglik_b: f64,
    pub max_coef_diff: f64,
    pub max_se_diff: f64,
    pub loglik_diff: f64,
    pub tolerances: Tolerances,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub matched: Vec<MatchedCoefficient>,
}

fn matched(a: &FitResult, b: &FitResult) -> Vec<MatchedCoefficient> {
    let se_of = |r: &FitResult, e: &crate::catalog::ParamEntry| e.position().and_then(|p| r.se.as_ref().map(|s| s[p]));
    a.spec
        .params
        .iter()
        .filter(|e| e.role.is_lagged_coefficient())
        .filter_map(|ea| {
            let eb = b.spec.find(ea.role, ea.variable, ea.wave)?;
            Some(MatchedCoefficient {
                role: ea.role,
                variable: ea.variable,
                wave: ea.wave,
                estimate_a: ea.value(&a.theta_hat),
                estimate_b: eb.value(&b.theta_hat),
                se_a: se_of(a, ea),
                se_b: se_of(b, eb),
            })
        })
        .collect()
}

/// Compares two completed fits of the same data.
pub fn compare_fits(a: &FitResult, b: &FitResult, tolerances: Tolerances) -> EquivalenceReport {
    let m = matched(a, b);
    let max_coef_diff = m.iter().map(|c| (c.estimate_a - c.estimate_b).abs()).fold(0.0, f64::max);
    let se_diffs: Vec<Option<f64>> = m
        .iter()
        .map(|c| match (c.se_a, c.se_b) {
            (Some(x), Some(y)) => Some((x - y).abs()),
            (None, None) if c.estimate_a == c.estimate_b => Some(0.0),
            _ => None,
        })
        .collect();
    let se_missing = se_diffs.iter().any(Option::is_none);
    let max_se_diff = if se_missing { f64::NAN } else { se_diffs.iter().flatten().fold(0.0f64, |m, v| m.max(*v)) };
    let loglik_diff = (a.loglik - b.loglik).abs();

    let (verdict, note) = if !a.converged || !b.converged {
        (Verdict::Inconclusive, Some("a fit did not converge".to_string()))
    } else if max_coef_diff >= tolerances.coef || loglik_diff >= tolerances.loglik {
        (Verdict::NotEquivalent, None)
    } else if se_missing {
        (Verdict::Inconclusive, Some("standard errors unavailable".to_string()))
    } else if max_se_diff >= tolerances.se {
        (Verdict::NotEquivalent, None)
    } else {
        (Verdict::Equivalent, None)
    };
    EquivalenceReport {
        model_a: ModelDescriptor::of(&a.spec),
        model_b: ModelDescriptor::of(&b.spec),
        label_a: a.spec.label(),
        label_b: b.spec.label(),
        loglik_a: a.loglik,
        loglik_b: b.loglik,
        max_coef_diff,
        max_se_diff,
        loglik_diff,
        tolerances,
        verdict,
        note,
        matched: m,
    }
}

/// Fits both specs to `data` and compares matched coefficients, SEs and
/// log-likelihoods.
pub fn check_pair(
    data: &PanelData,
    a: &ModelSpec,
    b: &ModelSpec,
    tolerances: Tolerances,
    options: &FitOptions,
) -> Result<EquivalenceReport, EstimatorError> {
    let fa = fit(a, data, options)?;
    let fb = fit(b, data, options)?;
    Ok(compare_fits(&fa, &fb, tolerances))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub name: String,
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub model: ModelDescriptor,
    pub df: i64,
    pub free_parameters: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub indices: Option<FitIndices>,
    pub coefficients: Vec<Cell>,
    pub factor_covariances: Vec<Cell>,
    pub improper: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortKey {
    Aic,
    Bic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub n: usize,
    pub waves: usize,
    pub rows: Vec<ComparisonRow>,
}

pub fn coefficient_label(role: ParamRole, variable: Option<Variable>, wave: Option<usize>) -> String {
    let base = match role {
        ParamRole::Autoregressive => "beta",
        ParamRole::CrossLagged => "gamma",
        ParamRole::MovingAverage => "delta",
        ParamRole::CrossLaggedMovingAverage => "zeta",
        _ => "coef",
    };
    let v = variable.map_or(String::new(), |v| format!("_{}", v.letter()));
    let w = wave.map_or(String::new(), |w| format!(" t{w}"));
    format!("{base}{v}{w}")
}

fn is_factor_role(role: ParamRole) -> bool {
    matches!(
        role,
        ParamRole::TraitVariance
            | ParamRole::TraitCovariance
            | ParamRole::AccumulatingVariance
            | ParamRole::AccumulatingCovariance
            | ParamRole::GrowthVariance
            | ParamRole::GrowthCovariance
            | ParamRole::FactorInitialCovariance
    )
}

fn row_for(spec: &ModelSpec, result: Result<FitResult, EstimatorError>) -> ComparisonRow {
    let mut row = ComparisonRow {
        label: spec.label(),
        model: ModelDescriptor::of(spec),
        df: degrees_of_freedom(spec),
        free_parameters: spec.free_count,
        converged: false,
        indices: None,
        coefficients: Vec::new(),
        factor_covariances: Vec::new(),
        improper: Vec::new(),
        error: None,
    };
    let r = match result {
        Ok(r) => r,
        Err(e) => {
            row.error = Some(format!("estimator: {e}"));
            return row;
        }
    };
    row.converged = r.converged;
    row.indices = fit_indices(&r).ok();
    if !r.converged {
        row.error = Some("estimator: fit did not converge".into());
    }
    let se = |e: &crate::catalog::ParamEntry| e.position().and_then(|p| r.se.as_ref().map(|s| s[p]));
    for e in &spec.params {
        if e.role.is_lagged_coefficient() {
            row.coefficients.push(Cell {
                name: coefficient_label(e.role, e.variable, e.wave),
                estimate: e.value(&r.theta_hat),
                se: se(e),
            });
        } else if is_factor_role(e.role) {
            row.factor_covariances.push(Cell { name: e.name.clone(), estimate: e.value(&r.theta_hat), se: se(e) });
        }
    }
    row.improper = r.improper_flags.iter().map(|f| f.to_string()).collect();
    row
}

/// Fits every spec to `data`; rows keep the input order.
pub fn compare_menu(
    data: &PanelData,
    specs: &[ModelSpec],
    options: &FitOptions,
    execution: Execution,
) -> ComparisonTable {
    let rows = par::map_indexed(execution, specs.len(), |i| row_for(&specs[i], fit(&specs[i], data, options)));
    ComparisonTable { n: data.n(), waves: data.t_waves(), rows }
}

impl ComparisonTable {
    /// Stable sort ascending by the criterion; rows without indices go last.
    pub fn sort_by(&mut self, key: SortKey) {
        let value = |r: &ComparisonRow| {
            r.indices.as_ref().map_or(f64::INFINITY, |i| match key {
                SortKey::Aic => i.aic,
                SortKey::Bic => i.bic,
            })
        };
        self.rows.sort_by(|a, b| value(a).total_cmp(&value(b)));
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("comparison table is serializable")
    }

    /// Parameters down the side, one column per model; improper solutions are
    /// marked with `!` and listed under the table.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<String> = Vec::new();
        let mut factor_keys: Vec<String> = Vec::new();
        for r in &self.rows {
            for c in &r.coefficients {
                if !keys.contains(&c.name) {
                    keys.push(c.name.clone());
                }
            }
            for c in &r.factor_covariances {
                if !factor_keys.contains(&c.name) {
                    factor_keys.push(c.name.clone());
                }
            }
        }
        let fmt_cell = |cells: &[Cell], key: &str| {
            cells.iter().find(|c| c.name == key).map_or(String::new(), |c| match c.se {
                Some(se) => format!("{:.3} ({:.3})", c.estimate, se),
                None => format!("{:.3}", c.estimate),
            })
        };
        let headers: Vec<String> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| format!("[{}]{}", i + 1, if r.improper.is_empty() { "" } else { "!" }))
            .collect();
        let mut lines: Vec<(String, Vec<String>)> = Vec::new();
        for k in &keys {
            lines.push((k.clone(), self.rows.iter().map(|r| fmt_cell(&r.coefficients, k)).collect()));
        }
        for k in &factor_keys {
            lines.push((k.clone(), self.rows.iter().map(|r| fmt_cell(&r.factor_covariances, k)).collect()));
        }
        let index = |f: &dyn Fn(&FitIndices) -> String| -> Vec<String> {
            self.rows.iter().map(|r| r.indices.as_ref().map_or("-".to_string(), &f)).collect()
        };
        lines.push(("df".into(), self.rows.iter().map(|r| r.df.to_string()).collect()));
        lines.push(("CFI".into(), index(&|i| format!("{:.3}", i.cfi))));
        lines.push(("AIC".into(), index(&|i| format!("{:.1}", i.aic))));
        lines.push(("BIC".into(), index(&|i| format!("{:.1}", i.bic))));
        lines.push(("RMSEA".into(), index(&|i| format!("{:.3}", i.rmsea))));
        lines.push(("SRMR".into(), index(&|i| format!("{:.3}", i.srmr))));

        let first = lines.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0).max(9);
        let widths: Vec<usize> = (0..self.rows.len())
            .map(|c| {
                lines.iter().map(|(_, v)| v[c].chars().count()).chain([headers[c].chars().count()]).max().unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<first$}", "parameter");
        for (h, w) in headers.iter().zip(&widths) {
            let _ = write!(out, "  {h:>w$}");
        }
        out.push('\n');
        for (k, vals) in &lines {
            let _ = write!(out, "{k:<first$}");
            for (v, w) in vals.iter().zip(&widths) {
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "[{}] {}", i + 1, r.label);
            for f in &r.improper {
                let _ = writeln!(out, "    ! {f}");
            }
            if let Some(e) = &r.error {
                let _ = writeln!(out, "    {e}");
            }
        }
        out
    }
}
