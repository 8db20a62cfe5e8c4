//! Longitudinal cross-lagged panel models fitted by normal-theory maximum
//! likelihood.
//!
//! The crate covers the model family used to separate within-person from
//! between-person relations in two-variable panel data: CLPM, RI-CLPM,
//! predetermined RI-CLPM, DPM, STARTS, LCM-SR, LCS and GCLM. Every model is
//! compiled into one acyclic path system from which implied means and
//! covariances are computed, so a single estimator, simulator and set of fit
//! indices serves all of them.
//!
//! Module map:
//!
//! - [`panel_data`]: wide-format ingestion and sample moments
//! - [`catalog`]: model kinds, constraint profiles and parameter tables
//! - [`moments`]: path systems, implied moments, Lyapunov and steady-state solvers
//! - [`estimator`]: ML discrepancy, quasi-Newton fitting, standard errors, improper solutions
//! - [`assessment`]: chi-square, CFI, RMSEA, SRMR, information criteria, variance ratios
//! - [`simulate`]: equation-level data generation with optional burn-in
//! - [`equivalence`]: pairwise equivalence checks and comparison tables
//! - [`study`]: seeded Monte Carlo replication harness
//! - [`par`]: parallel/sequential execution switch

// index loops mirror the wave subscripts; `!(x < y)` guards are NaN-aware on purpose
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assessment;
pub mod catalog;
pub mod equivalence;
pub mod estimator;
pub mod moments;
pub mod panel_data;
pub mod par;
pub mod simulate;
pub mod study;

mod optimizer;

pub use assessment::{fit_indices, residual_correlations, trait_variance_ratio, FitIndices, TraitVarianceRatio};
pub use catalog::{
    build_spec, comparison_menu, degrees_of_freedom, min_waves, CatalogError, ConstraintProfile, ModelDescriptor,
    ModelKind, ModelSpec, ParamEntry, ParamRole, ParamStatus, Variable,
};
pub use equivalence::{
    check_pair, compare_fits, compare_menu, ComparisonTable, EquivalenceReport, SortKey, Tolerances, Verdict,
};
pub use estimator::{
    detect_improper, fit, fit_function_value, fit_moments, standard_errors, EstimatorError, FitOptions, FitResult,
    ImproperFlag,
};
pub use moments::{
    assemble_system, implied_moments, solve_stationary_covariance, steady_state_loading, ImpliedMoments, PathSystem,
};
pub use panel_data::{load_wide, sample_moments, write_wide, PanelData, SampleMoments};
pub use par::Execution;
pub use simulate::{simulate, SimError, SimPlan};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
