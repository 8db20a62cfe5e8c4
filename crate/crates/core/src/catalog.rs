//! Declarative model catalog.
//!
//! [`build_spec`] compiles a [`ModelKind`] and a [`ConstraintProfile`] into a
//! [`ModelSpec`]: an ordered parameter table plus the node layout that
//! [`crate::moments::assemble_system`] turns into a path system. Parameter
//! names are canonical (`beta_x_t3`, `res_var_y_t2`, `trait_cov_xy`, …) and
//! time-invariant constraints tie per-wave entries to one position named by
//! the group (`beta_x`).
//!
//! Counting rules (T waves, p = 2T observed variables, p(p+3)/2 moments):
//!
//! | kind | free parameters |
//! |---|---|
//! | CLPM | intercepts for t ≥ 2, t=1 means/variances/covariance, coefficients, residual blocks |
//! | RI-CLPM | 2T group means, trait block (3), t=1 within-person block (3), coefficients, residual blocks |
//! | predetermined RI-CLPM | RI-CLPM + 4 trait–initial covariances |
//! | DPM | intercepts for t ≥ 2, t=1 block (5), accumulating block (3) + 4 covariances with t=1 |
//! | STARTS | RI-CLPM on true scores + time-invariant measurement-error block (3) |
//! | LCM-SR | growth means (4) and covariances (10), t=1 deviation block (3) |
//! | LCS | error block (3), A means/block (5), t=1 true-score means/block (5), Cov(A, f₁) (4) |
//! | GCLM | intercepts for t ≥ 2, B block (3), t=1 block (5), loadings, MA/CLMA from t ≥ 3 |
//!
//! all followed by the autoregressive/cross-lagged coefficients and residual
//! (co)variances of each transition.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel_data::SampleMoments;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("insufficient waves: {kind} with this profile needs at least {required} waves, got {got}")]
    InsufficientWaves { kind: ModelKind, required: usize, got: usize },
    #[error("incompatible profile: {0}")]
    IncompatibleProfile(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("no value given for {}", .0.join(", "))]
    MissingParameters(Vec<String>),
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Clpm,
    RiClpm,
    PredeterminedRiClpm,
    Dpm,
    Starts,
    LcmSr,
    Lcs,
    Gclm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Clpm,
        ModelKind::RiClpm,
        ModelKind::PredeterminedRiClpm,
        ModelKind::Dpm,
        ModelKind::Starts,
        ModelKind::LcmSr,
        ModelKind::Lcs,
        ModelKind::Gclm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Clpm => "CLPM",
            ModelKind::RiClpm => "RI-CLPM",
            ModelKind::PredeterminedRiClpm => "Predetermined RI-CLPM",
            ModelKind::Dpm => "DPM",
            ModelKind::Starts => "STARTS",
            ModelKind::LcmSr => "LCM-SR",
            ModelKind::Lcs => "LCS",
            ModelKind::Gclm => "GCLM",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            ModelKind::Clpm => "clpm",
            ModelKind::RiClpm => "ri-clpm",
            ModelKind::PredeterminedRiClpm => "predetermined-ri-clpm",
            ModelKind::Dpm => "dpm",
            ModelKind::Starts => "starts",
            ModelKind::LcmSr => "lcm-sr",
            ModelKind::Lcs => "lcs",
            ModelKind::Gclm => "gclm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let kind = match norm.as_str() {
            "clpm" => ModelKind::Clpm,
            "ri-clpm" | "riclpm" => ModelKind::RiClpm,
            "predetermined-ri-clpm" | "pred-ri-clpm" | "predetermined" => ModelKind::PredeterminedRiClpm,
            "dpm" => ModelKind::Dpm,
            "starts" => ModelKind::Starts,
            "lcm-sr" | "lcmsr" => ModelKind::LcmSr,
            "lcs" => ModelKind::Lcs,
            "gclm" => ModelKind::Gclm,
            _ => return Err(CatalogError::UnknownKind(s.to_string())),
        };
        Ok(kind)
    }
}

/// Which quantities are tied across waves and which optional model features
/// are switched on. The default is fully time-varying with every option off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintProfile {
    /// Ties β and γ (and for GCLM δ and ζ) across transitions.
    pub coefficients_time_invariant: bool,
    /// Ties residual variances and covariance across transitions.
    pub residuals_time_invariant: bool,
    pub lcs_zero_residuals: bool,
    pub starts_stationarity: bool,
    pub gclm_include_ma: bool,
    pub gclm_loadings_time_varying: bool,
    pub dpm_constrained_initial_loadings: bool,
}

impl ConstraintProfile {
    pub fn time_invariant() -> Self {
        Self { coefficients_time_invariant: true, residuals_time_invariant: true, ..Self::default() }
    }

    pub fn time_varying() -> Self {
        Self::default()
    }

    fn validate(&self, kind: ModelKind) -> Result<(), CatalogError> {
        let bad = |flag: &str| Err(CatalogError::IncompatibleProfile(format!("`{flag}` is not valid for {kind}")));
        if self.lcs_zero_residuals && kind != ModelKind::Lcs {
            return bad("lcs_zero_residuals");
        }
        if self.starts_stationarity && kind != ModelKind::Starts {
            return bad("starts_stationarity");
        }
        if self.gclm_include_ma && kind != ModelKind::Gclm {
            return bad("gclm_include_ma");
        }
        if self.gclm_loadings_time_varying && kind != ModelKind::Gclm {
            return bad("gclm_loadings_time_varying");
        }
        if self.dpm_constrained_initial_loadings && kind != ModelKind::Dpm {
            return bad("dpm_constrained_initial_loadings");
        }
        if self.starts_stationarity && !(self.coefficients_time_invariant && self.residuals_time_invariant) {
            return Err(CatalogError::IncompatibleProfile(
                "starts_stationarity needs time-invariant coefficients and residuals".into(),
            ));
        }
        if self.dpm_constrained_initial_loadings && !self.coefficients_time_invariant {
            return Err(CatalogError::IncompatibleProfile(
                "dpm_constrained_initial_loadings needs time-invariant coefficients".into(),
            ));
        }
        Ok(())
    }

    /// Short human label in the style of comparison tables.
    pub fn summary(&self) -> String {
        let mut s = match (self.coefficients_time_invariant, self.residuals_time_invariant) {
            (true, true) => "time-invariant".to_string(),
            (false, false) => "time-varying".to_string(),
            (false, true) => "varying coefficients".to_string(),
            (true, false) => "invariant coefficients".to_string(),
        };
        for (on, tag) in [
            (self.lcs_zero_residuals, "zero residuals"),
            (self.starts_stationarity, "stationary"),
            (self.gclm_include_ma, "MA"),
            (self.gclm_loadings_time_varying, "varying loadings"),
            (self.dpm_constrained_initial_loadings, "constrained"),
        ] {
            if on {
                s.push_str(", ");
                s.push_str(tag);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    X,
    Y,
}

impl Variable {
    pub fn index(self) -> usize {
        match self {
            Variable::X => 0,
            Variable::Y => 1,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Variable::X => 'x',
            Variable::Y => 'y',
        }
    }

    pub const BOTH: [Variable; 2] = [Variable::X, Variable::Y];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    Intercept,
    GroupMean,
    Autoregressive,
    CrossLagged,
    ResidualVariance,
    ResidualCovariance,
    TraitVariance,
    TraitCovariance,
    AccumulatingMean,
    AccumulatingVariance,
    AccumulatingCovariance,
    GrowthMean,
    GrowthVariance,
    GrowthCovariance,
    Loading,
    MovingAverage,
    CrossLaggedMovingAverage,
    ErrorVariance,
    ErrorCovariance,
    ExogenousMean,
    ExogenousVariance,
    ExogenousCovariance,
    FactorInitialCovariance,
}

impl ParamRole {
    pub fn is_variance(self) -> bool {
        matches!(
            self,
            ParamRole::ResidualVariance
                | ParamRole::TraitVariance
                | ParamRole::AccumulatingVariance
                | ParamRole::GrowthVariance
                | ParamRole::ErrorVariance
                | ParamRole::ExogenousVariance
        )
    }

    /// β, γ, δ, ζ: the lagged-regression coefficients compared across models.
    pub fn is_lagged_coefficient(self) -> bool {
        matches!(
            self,
            ParamRole::Autoregressive
                | ParamRole::CrossLagged
                | ParamRole::MovingAverage
                | ParamRole::CrossLaggedMovingAverage
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamStatus {
    Free,
    Fixed(f64),
    /// Shares parameter-vector position `0` with the other members of its group.
    Tied(usize),
}

/// Where a parameter value lands in the path system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Target {
    Intercept(usize),
    Path {
        to: usize,
        from: usize,
    },
    /// Symmetric; stored with `.0 >= .1`.
    Cov(usize, usize),
}

impl Target {
    fn cov(i: usize, j: usize) -> Self {
        Target::Cov(i.max(j), i.min(j))
    }
}

/// Data-dependent start rule, evaluated against sample moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum StartRule {
    Const(f64),
    Mean(usize),
    /// `m_j − 0.1·(m_a + m_b)`, the intercept implied by start coefficients of 0.1.
    Intercept {
        obs: usize,
        lags: [usize; 2],
    },
    MeanDiff(usize, usize),
    Var(usize, f64),
    Cov(usize, usize, f64),
}

pub(crate) const START_COEFFICIENT: f64 = 0.1;

impl StartRule {
    fn eval(&self, mean: &[f64], cov: &dyn Fn(usize, usize) -> f64) -> f64 {
        match *self {
            StartRule::Const(v) => v,
            StartRule::Mean(j) => mean[j],
            StartRule::Intercept { obs, lags } => mean[obs] - START_COEFFICIENT * (mean[lags[0]] + mean[lags[1]]),
            StartRule::MeanDiff(a, b) => mean[a] - mean[b],
            StartRule::Var(j, frac) => frac * cov(j, j),
            StartRule::Cov(j, k, frac) => frac * cov(j, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub role: ParamRole,
    pub variable: Option<Variable>,
    pub wave: Option<usize>,
    pub status: ParamStatus,
    /// Default start value (unit-variance, zero-mean data); the estimator
    /// recomputes data-based starts.
    pub start: f64,
    group: String,
    position: Option<usize>,
    pub(crate) targets: Vec<Target>,
    pub(crate) start_rule: StartRule,
}

impl ParamEntry {
    /// Label of the parameter-vector position (the tie group, or the entry name).
    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn position(&self) -> Option<usize> {
        self.position
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        match (self.status, self.position) {
            (ParamStatus::Fixed(v), _) => v,
            (_, Some(p)) => theta[p],
            _ => unreachable!("free entry without a position"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Observed,
    Factor,
    Deviation,
    TrueScore,
    Innovation,
    MeasurementError,
    /// Latent t=1 state of the constrained DPM.
    InitialState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

/// A (co)variance block whose definiteness is reported by the improper-solution
/// check. `members[i][j]` is an entry index, `None` meaning a fixed zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CovBlock {
    pub label: String,
    pub factor: bool,
    pub members: Vec<Vec<Option<usize>>>,
}

/// Nonlinear functions of θ installed into the path system after the linear
/// placements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Derived {
    /// t=1 within-person block = stationary covariance of (Φ, Ψ).
    StationaryInitial { phi: [[usize; 2]; 2], psi: [usize; 3], nodes: [usize; 2] },
    /// Paths factor → t=1 observation = (I − Φ)⁻¹.
    SteadyStateLoading { phi: [[usize; 2]; 2], factors: [usize; 2], initial: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub nodes: Vec<Node>,
    pub observed: Vec<usize>,
    pub fixed: Vec<(Target, f64)>,
    pub derived: Option<Derived>,
    /// Nodes whose variance is the within-person variance at each wave (RI-CLPM, STARTS).
    pub deviation_nodes: Vec<[usize; 2]>,
    pub trait_nodes: Option<[usize; 2]>,
}

/// A compiled model: kind, waves, profile and the parameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub t_waves: usize,
    pub profile: ConstraintProfile,
    pub params: Vec<ParamEntry>,
    pub free_count: usize,
    pub blocks: Vec<CovBlock>,
    pub(crate) layout: Layout,
    position_names: Vec<String>,
}

impl ModelSpec {
    /// Number of observed variables, 2T.
    pub fn p(&self) -> usize {
        2 * self.t_waves
    }

    pub fn moment_count(&self) -> usize {
        let p = self.p();
        p * (p + 3) / 2
    }

    /// One name per parameter-vector position.
    pub fn param_names(&self) -> &[String] {
        &self.position_names
    }

    pub fn position_of(&self, name: &str) -> Option<usize> {
        self.position_names.iter().position(|n| n == name)
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.params.iter().find(|e| e.name == name)
    }

    pub fn find(&self, role: ParamRole, variable: Option<Variable>, wave: Option<usize>) -> Option<&ParamEntry> {
        self.params.iter().find(|e| e.role == role && e.variable == variable && e.wave == wave)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.layout.nodes
    }

    pub fn observed_nodes(&self) -> &[usize] {
        &self.layout.observed
    }

    pub fn label(&self) -> String {
        format!("{} ({})", self.kind, self.profile.summary())
    }

    /// Builds θ by evaluating `f` on the first entry at each position.
    pub fn theta_from(&self, mut f: impl FnMut(&ParamEntry) -> f64) -> Vec<f64> {
        let mut theta = vec![f64::NAN; self.free_count];
        for e in &self.params {
            if let Some(p) = e.position {
                if theta[p].is_nan() {
                    theta[p] = f(e);
                }
            }
        }
        theta
    }

    /// Builds θ from a name → value map keyed by position names. Every position
    /// must be present and every key must exist.
    pub fn theta_from_map(&self, values: &HashMap<String, f64>) -> Result<Vec<f64>, CatalogError> {
        if let Some(k) = values.keys().find(|k| self.position_of(k).is_none()) {
            return Err(CatalogError::UnknownParameter(k.clone()));
        }
        let missing: Vec<String> = self.position_names.iter().filter(|n| !values.contains_key(*n)).cloned().collect();
        if !missing.is_empty() {
            return Err(CatalogError::MissingParameters(missing));
        }
        Ok(self.position_names.iter().map(|n| values[n]).collect())
    }

    pub fn default_start(&self) -> Vec<f64> {
        self.theta_from(|e| e.start)
    }

    /// Data-based start values: coefficients 0.1, means and intercepts from
    /// sample means, variances as fractions of sample variances.
    pub fn start_values(&self, moments: &SampleMoments) -> Vec<f64> {
        let mean = moments.mean.as_slice();
        let cov = |i: usize, j: usize| moments.cov[(i, j)];
        self.theta_from(|e| e.start_rule.eval(mean, &cov))
    }

    /// Returns a copy in which every entry named `name` (or belonging to the
    /// tie group `name`) is fixed at `value`.
    pub fn fix(&self, name: &str, value: f64) -> Result<ModelSpec, CatalogError> {
        let mut out = self.clone();
        let mut hit = false;
        for e in &mut out.params {
            if e.name == name || e.group == name {
                e.status = ParamStatus::Fixed(value);
                hit = true;
            }
        }
        if !hit {
            return Err(CatalogError::UnknownParameter(name.to_string()));
        }
        out.assign_positions();
        Ok(out)
    }

    pub fn fix_all(&self, values: &[(&str, f64)]) -> Result<ModelSpec, CatalogError> {
        values.iter().try_fold(self.clone(), |s, (n, v)| s.fix(n, *v))
    }

    /// Entry names fixed by [`ModelSpec::fix`] (as position-group labels), with values.
    pub fn fixed_params(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for e in &self.params {
            if let ParamStatus::Fixed(v) = e.status {
                if !out.iter().any(|(g, _)| g == &e.group) {
                    out.push((e.group.clone(), v));
                }
            }
        }
        out
    }

    fn assign_positions(&mut self) {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut sizes: HashMap<String, usize> = HashMap::new();
        for e in &self.params {
            if !matches!(e.status, ParamStatus::Fixed(_)) {
                *sizes.entry(e.group.clone()).or_default() += 1;
            }
        }
        for e in &mut self.params {
            if matches!(e.status, ParamStatus::Fixed(_)) {
                e.position = None;
                continue;
            }
            let pos = *index.entry(e.group.clone()).or_insert_with(|| {
                names.push(e.group.clone());
                names.len() - 1
            });
            e.position = Some(pos);
            e.status = if sizes[&e.group] > 1 { ParamStatus::Tied(pos) } else { ParamStatus::Free };
        }
        self.free_count = names.len();
        self.position_names = names;
    }

    /// Coefficient matrix `[[β_x, γ_x], [γ_y, β_y]]` of transition `t`.
    pub fn phi(&self, theta: &[f64], t: usize) -> [[f64; 2]; 2] {
        let g = |n: String| self.entry(&n).map(|e| e.value(theta)).unwrap_or(0.0);
        [
            [g(format!("beta_x_t{t}")), g(format!("gamma_x_t{t}"))],
            [g(format!("gamma_y_t{t}")), g(format!("beta_y_t{t}"))],
        ]
    }

    /// Residual covariance of transition `t` (zero when the model has none).
    pub fn psi(&self, theta: &[f64], t: usize) -> [[f64; 2]; 2] {
        let g = |n: String| self.entry(&n).map(|e| e.value(theta)).unwrap_or(0.0);
        let c = g(format!("res_cov_xy_t{t}"));
        [[g(format!("res_var_x_t{t}")), c], [c, g(format!("res_var_y_t{t}"))]]
    }
}

/// p(p+3)/2 − free_count, with p = 2T.
pub fn degrees_of_freedom(spec: &ModelSpec) -> i64 {
    spec.moment_count() as i64 - spec.free_count as i64
}

fn floor_waves(kind: ModelKind, profile: &ConstraintProfile) -> usize {
    let fully_varying = !profile.coefficients_time_invariant && !profile.residuals_time_invariant;
    match kind {
        ModelKind::Clpm => 2,
        ModelKind::RiClpm => 3,
        ModelKind::PredeterminedRiClpm | ModelKind::Starts => 4,
        ModelKind::LcmSr | ModelKind::Lcs | ModelKind::Gclm | ModelKind::Dpm => {
            if fully_varying {
                4
            } else {
                3
            }
        }
    }
}

/// Minimum number of waves for identification: the conventional minimum for the
/// kind, raised if needed until the moment count covers the free parameters.
pub fn min_waves(kind: ModelKind, profile: &ConstraintProfile) -> Result<usize, CatalogError> {
    profile.validate(kind)?;
    let mut t = floor_waves(kind, profile);
    loop {
        let spec = compile(kind, t, *profile);
        if degrees_of_freedom(&spec) >= 0 {
            return Ok(t);
        }
        t += 1;
    }
}

pub fn build_spec(kind: ModelKind, t_waves: usize, profile: ConstraintProfile) -> Result<ModelSpec, CatalogError> {
    let required = min_waves(kind, &profile)?;
    if t_waves < required {
        return Err(CatalogError::InsufficientWaves { kind, required, got: t_waves });
    }
    Ok(compile(kind, t_waves, profile))
}

/// Serializable model description: kind, waves, profile flags and fixed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub kind: ModelKind,
    pub waves: usize,
    #[serde(default)]
    pub profile: ConstraintProfile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<FixedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedValue {
    pub name: String,
    pub value: f64,
}

impl ModelDescriptor {
    pub fn of(spec: &ModelSpec) -> Self {
        Self {
            kind: spec.kind,
            waves: spec.t_waves,
            profile: spec.profile,
            fixed: spec.fixed_params().into_iter().map(|(name, value)| FixedValue { name, value }).collect(),
        }
    }

    pub fn build(&self) -> Result<ModelSpec, CatalogError> {
        let spec = build_spec(self.kind, self.waves, self.profile)?;
        self.fixed.iter().try_fold(spec, |s, f| s.fix(&f.name, f.value))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("descriptor is always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

// ---------------------------------------------------------------------------
// compilation

fn obs(t: usize, v: Variable) -> usize {
    2 * (t - 1) + v.index()
}

struct Builder {
    kind: ModelKind,
    t: usize,
    profile: ConstraintProfile,
    nodes: Vec<Node>,
    params: Vec<ParamEntry>,
    fixed: Vec<(Target, f64)>,
    blocks: Vec<CovBlock>,
}

impl Builder {
    fn node(&mut self, name: impl Into<String>, kind: NodeKind) -> usize {
        self.nodes.push(Node { name: name.into(), kind });
        self.nodes.len() - 1
    }

    fn pair(&mut self, x: String, y: String, kind: NodeKind) -> [usize; 2] {
        [self.node(x, kind), self.node(y, kind)]
    }

    #[allow(clippy::too_many_arguments)]
    fn param(
        &mut self,
        name: String,
        role: ParamRole,
        variable: Option<Variable>,
        wave: Option<usize>,
        group: Option<String>,
        target: Target,
        rule: StartRule,
    ) -> usize {
        let unit_mean = vec![0.0; 2 * self.t];
        let start = rule.eval(&unit_mean, &|i, j| if i == j { 1.0 } else { 0.0 });
        self.params.push(ParamEntry {
            group: group.unwrap_or_else(|| name.clone()),
            name,
            role,
            variable,
            wave,
            status: ParamStatus::Free,
            start,
            position: None,
            targets: vec![target],
            start_rule: rule,
        });
        self.params.len() - 1
    }

    fn fixed_path(&mut self, to: usize, from: usize, w: f64) {
        self.fixed.push((Target::Path { to, from }, w));
    }

    /// Variance/covariance triple for a pair of nodes; returns the 2×2 block.
    #[allow(clippy::too_many_arguments)]
    fn cov_triple(
        &mut self,
        prefix: &str,
        wave: Option<usize>,
        per_wave: bool,
        tied: bool,
        nodes: [usize; 2],
        roles: (ParamRole, ParamRole),
        var_rules: [StartRule; 2],
        cov_rule: StartRule,
    ) -> Vec<Vec<Option<usize>>> {
        let sfx = |base: String| match wave {
            Some(t) if per_wave => format!("{base}_t{t}"),
            _ => base,
        };
        let grp = |base: &str| tied.then(|| base.to_string());
        let vx = self.param(
            sfx(format!("{prefix}_var_x")),
            roles.0,
            Some(Variable::X),
            wave,
            grp(&format!("{prefix}_var_x")),
            Target::cov(nodes[0], nodes[0]),
            var_rules[0],
        );
        let vy = self.param(
            sfx(format!("{prefix}_var_y")),
            roles.0,
            Some(Variable::Y),
            wave,
            grp(&format!("{prefix}_var_y")),
            Target::cov(nodes[1], nodes[1]),
            var_rules[1],
        );
        let c = self.param(
            sfx(format!("{prefix}_cov_xy")),
            roles.1,
            None,
            wave,
            grp(&format!("{prefix}_cov_xy")),
            Target::cov(nodes[0], nodes[1]),
            cov_rule,
        );
        vec![vec![Some(vx), Some(c)], vec![Some(c), Some(vy)]]
    }

    /// Exogenous t=1 block on `nodes`; with `means`, intercepts are attached too.
    fn initial_block(&mut self, nodes: [usize; 2], means: bool, var_frac: f64) {
        if means {
            for (v, &n) in Variable::BOTH.iter().zip(&nodes) {
                self.param(
                    format!("init_mean_{}", v.letter()),
                    ParamRole::ExogenousMean,
                    Some(*v),
                    Some(1),
                    None,
                    Target::Intercept(n),
                    StartRule::Mean(obs(1, *v)),
                );
            }
        }
        let (ox, oy) = (obs(1, Variable::X), obs(1, Variable::Y));
        let cov_rule = if var_frac == 1.0 { StartRule::Cov(ox, oy, 1.0) } else { StartRule::Const(0.0) };
        let members = self.cov_triple(
            "init",
            Some(1),
            false,
            false,
            nodes,
            (ParamRole::ExogenousVariance, ParamRole::ExogenousCovariance),
            [StartRule::Var(ox, var_frac), StartRule::Var(oy, var_frac)],
            cov_rule,
        );
        self.blocks.push(CovBlock { label: "initial".into(), factor: false, members });
    }

    fn factor_block(
        &mut self,
        prefix: &str,
        label: &str,
        nodes: [usize; 2],
        roles: (ParamRole, ParamRole),
        frac: f64,
        wave: usize,
    ) {
        let members = self.cov_triple(
            prefix,
            None,
            false,
            false,
            nodes,
            roles,
            [StartRule::Var(obs(wave, Variable::X), frac), StartRule::Var(obs(wave, Variable::Y), frac)],
            StartRule::Const(0.0),
        );
        self.blocks.push(CovBlock { label: label.into(), factor: true, members });
    }

    /// Innovation nodes d_t for t = 2..T with their residual blocks.
    fn innovations(&mut self, frac: f64) -> Vec<[usize; 2]> {
        let mut out = vec![[usize::MAX; 2]; self.t + 1];
        let tied = self.profile.residuals_time_invariant;
        for t in 2..=self.t {
            let d = self.pair(format!("dx{t}"), format!("dy{t}"), NodeKind::Innovation);
            let members = self.cov_triple(
                "res",
                Some(t),
                true,
                tied,
                d,
                (ParamRole::ResidualVariance, ParamRole::ResidualCovariance),
                [StartRule::Var(obs(t, Variable::X), frac), StartRule::Var(obs(t, Variable::Y), frac)],
                StartRule::Const(0.0),
            );
            if t == 2 || !tied {
                let label = if tied { "residual".to_string() } else { format!("residual_t{t}") };
                self.blocks.push(CovBlock { label, factor: false, members });
            }
            out[t] = d;
        }
        out
    }

    /// β/γ paths from `prev` to `cur` for transition `t`.
    fn coefficients(&mut self, t: usize, prev: [usize; 2], cur: [usize; 2]) {
        let tied = self.profile.coefficients_time_invariant;
        let specs = [
            ("beta_x", ParamRole::Autoregressive, Variable::X, cur[0], prev[0]),
            ("gamma_x", ParamRole::CrossLagged, Variable::X, cur[0], prev[1]),
            ("beta_y", ParamRole::Autoregressive, Variable::Y, cur[1], prev[1]),
            ("gamma_y", ParamRole::CrossLagged, Variable::Y, cur[1], prev[0]),
        ];
        for (base, role, v, to, from) in specs {
            self.param(
                format!("{base}_t{t}"),
                role,
                Some(v),
                Some(t),
                tied.then(|| base.to_string()),
                Target::Path { to, from },
                StartRule::Const(START_COEFFICIENT),
            );
        }
    }

    fn intercepts(&mut self, t: usize, nodes: [usize; 2]) {
        for (v, &n) in Variable::BOTH.iter().zip(&nodes) {
            let lags = [obs(t - 1, Variable::X), obs(t - 1, Variable::Y)];
            self.param(
                format!("alpha_{}_t{t}", v.letter()),
                ParamRole::Intercept,
                Some(*v),
                Some(t),
                None,
                Target::Intercept(n),
                StartRule::Intercept { obs: obs(t, *v), lags },
            );
        }
    }

    fn group_means(&mut self, observed: &[[usize; 2]]) {
        for t in 1..=self.t {
            for v in Variable::BOTH {
                self.param(
                    format!("mu_{}_t{t}", v.letter()),
                    ParamRole::GroupMean,
                    Some(v),
                    Some(t),
                    None,
                    Target::Intercept(observed[t][v.index()]),
                    StartRule::Mean(obs(t, v)),
                );
            }
        }
    }

    fn finish(
        self,
        observed: Vec<[usize; 2]>,
        derived: Option<Derived>,
        deviation: Vec<[usize; 2]>,
        trait_nodes: Option<[usize; 2]>,
    ) -> ModelSpec {
        let observed_flat: Vec<usize> = observed[1..].iter().flat_map(|p| p.iter().copied()).collect();
        let mut spec = ModelSpec {
            kind: self.kind,
            t_waves: self.t,
            profile: self.profile,
            params: self.params,
            free_count: 0,
            blocks: self.blocks,
            layout: Layout {
                nodes: self.nodes,
                observed: observed_flat,
                fixed: self.fixed,
                derived,
                deviation_nodes: deviation,
                trait_nodes,
            },
            position_names: Vec::new(),
        };
        spec.assign_positions();
        spec
    }
}

fn compile(kind: ModelKind, t_waves: usize, profile: ConstraintProfile) -> ModelSpec {
    let b = Builder {
        kind,
        t: t_waves,
        profile,
        nodes: Vec::new(),
        params: Vec::new(),
        fixed: Vec::new(),
        blocks: Vec::new(),
    };
    match kind {
        ModelKind::Clpm => compile_clpm(b),
        ModelKind::RiClpm | ModelKind::PredeterminedRiClpm | ModelKind::Starts => compile_trait_family(b),
        ModelKind::Dpm => compile_dpm(b),
        ModelKind::LcmSr => compile_lcm_sr(b),
        ModelKind::Lcs => compile_lcs(b),
        ModelKind::Gclm => compile_gclm(b),
    }
}

fn placeholder_pairs(t: usize) -> Vec<[usize; 2]> {
    vec![[usize::MAX; 2]; t + 1]
}

fn compile_clpm(mut b: Builder) -> ModelSpec {
    let t_max = b.t;
    let mut observed = placeholder_pairs(t_max);
    observed[1] = b.pair("x1".into(), "y1".into(), NodeKind::Observed);
    b.initial_block(observed[1], true, 1.0);
    let d = b.innovations(0.5);
    for t in 2..=t_max {
        observed[t] = b.pair(format!("x{t}"), format!("y{t}"), NodeKind::Observed);
        b.intercepts(t, observed[t]);
        b.coefficients(t, observed[t - 1], observed[t]);
        for v in 0..2 {
            b.fixed_path(observed[t][v], d[t][v], 1.0);
        }
    }
    b.finish(observed, None, Vec::new(), None)
}

fn compile_trait_family(mut b: Builder) -> ModelSpec {
    let t_max = b.t;
    let kind = b.kind;
    let starts = kind == ModelKind::Starts;
    let frac = if starts { 1.0 / 3.0 } else { 0.5 };
    let trait_nodes = b.pair("Ix".into(), "Iy".into(), NodeKind::Factor);
    b.factor_block("trait", "trait", trait_nodes, (ParamRole::TraitVariance, ParamRole::TraitCovariance), frac, 1);

    let dev_name = |v: char, t: usize| if starts { format!("f*{v}{t}") } else { format!("{v}*{t}") };
    let mut dev = placeholder_pairs(t_max);
    dev[1] = b.pair(dev_name('x', 1), dev_name('y', 1), if starts { NodeKind::TrueScore } else { NodeKind::Deviation });

    let stationary = starts && b.profile.starts_stationarity;
    if !stationary {
        b.initial_block(dev[1], false, frac);
    }
    if kind == ModelKind::PredeterminedRiClpm {
        for (fi, &f) in trait_nodes.iter().enumerate() {
            for v in Variable::BOTH {
                b.param(
                    format!("trait_init_cov_i{}_{}1", ["x", "y"][fi], v.letter()),
                    ParamRole::FactorInitialCovariance,
                    Some(v),
                    Some(1),
                    None,
                    Target::cov(f, dev[1][v.index()]),
                    StartRule::Const(0.0),
                );
            }
        }
    }
    let d = b.innovations(frac);
    let mut errors = placeholder_pairs(t_max);
    if starts {
        for t in 1..=t_max {
            errors[t] = b.pair(format!("ex{t}"), format!("ey{t}"), NodeKind::MeasurementError);
            let members = b.cov_triple(
                "err",
                Some(t),
                true,
                true,
                errors[t],
                (ParamRole::ErrorVariance, ParamRole::ErrorCovariance),
                [StartRule::Var(obs(1, Variable::X), frac), StartRule::Var(obs(1, Variable::Y), frac)],
                StartRule::Const(0.0),
            );
            if t == 1 {
                b.blocks.push(CovBlock { label: "measurement_error".into(), factor: false, members });
            }
        }
    }
    for t in 2..=t_max {
        let kind_node = if starts { NodeKind::TrueScore } else { NodeKind::Deviation };
        dev[t] = b.pair(dev_name('x', t), dev_name('y', t), kind_node);
        b.coefficients(t, dev[t - 1], dev[t]);
        for v in 0..2 {
            b.fixed_path(dev[t][v], d[t][v], 1.0);
        }
    }
    let mut observed = placeholder_pairs(t_max);
    for t in 1..=t_max {
        observed[t] = b.pair(format!("x{t}"), format!("y{t}"), NodeKind::Observed);
        for v in 0..2 {
            b.fixed_path(observed[t][v], trait_nodes[v], 1.0);
            b.fixed_path(observed[t][v], dev[t][v], 1.0);
            if starts {
                b.fixed_path(observed[t][v], errors[t][v], 1.0);
            }
        }
    }
    b.group_means(&observed);
    let derived = stationary.then(|| Derived::StationaryInitial {
        phi: phi_entries(&b.params),
        psi: psi_entries(&b.params),
        nodes: dev[1],
    });
    let deviation = dev[1..].to_vec();
    b.finish(observed, derived, deviation, Some(trait_nodes))
}

fn phi_entries(params: &[ParamEntry]) -> [[usize; 2]; 2] {
    let idx = |n: &str| params.iter().position(|e| e.name == n).expect("t=2 coefficient exists");
    [[idx("beta_x_t2"), idx("gamma_x_t2")], [idx("gamma_y_t2"), idx("beta_y_t2")]]
}

fn psi_entries(params: &[ParamEntry]) -> [usize; 3] {
    let idx = |n: &str| params.iter().position(|e| e.name == n).expect("t=2 residual exists");
    [idx("res_var_x_t2"), idx("res_cov_xy_t2"), idx("res_var_y_t2")]
}

fn compile_dpm(mut b: Builder) -> ModelSpec {
    let t_max = b.t;
    let constrained = b.profile.dpm_constrained_initial_loadings;
    let acc = b.pair("Ax".into(), "Ay".into(), NodeKind::Factor);
    b.factor_block(
        "acc",
        "accumulating",
        acc,
        (ParamRole::AccumulatingVariance, ParamRole::AccumulatingCovariance),
        0.25,
        2,
    );

    let mut observed = placeholder_pairs(t_max);
    let mut derived = None;
    let d;
    if constrained {
        let w = b.pair("wx1".into(), "wy1".into(), NodeKind::InitialState);
        d = b.innovations(0.5);
        observed[1] = b.pair("x1".into(), "y1".into(), NodeKind::Observed);
        // means sit on x1/y1, the covariance block on the latent state
        for (v, &n) in Variable::BOTH.iter().zip(&observed[1]) {
            b.param(
                format!("init_mean_{}", v.letter()),
                ParamRole::ExogenousMean,
                Some(*v),
                Some(1),
                None,
                Target::Intercept(n),
                StartRule::Mean(obs(1, *v)),
            );
        }
        b.initial_block(w, false, 0.5);
        for v in 0..2 {
            b.fixed_path(observed[1][v], w[v], 1.0);
        }
    } else {
        observed[1] = b.pair("x1".into(), "y1".into(), NodeKind::Observed);
        b.initial_block(observed[1], true, 1.0);
        for (fi, &f) in acc.iter().enumerate() {
            for v in Variable::BOTH {
                b.param(
                    format!("acc_init_cov_a{}_{}1", ["x", "y"][fi], v.letter()),
                    ParamRole::FactorInitialCovariance,
                    Some(v),
                    Some(1),
                    None,
                    Target::cov(f, observed[1][v.index()]),
                    StartRule::Const(0.0),
                );
            }
        }
        d = b.innovations(0.5);
    }
    for t in 2..=t_max {
        observed[t] = b.pair(format!("x{t}"), format!("y{t}"), NodeKind::Observed);
        b.intercepts(t, observed[t]);
        b.coefficients(t, observed[t - 1], observed[t]);
        for v in 0..2 {
            b.fixed_path(observed[t][v], d[t][v], 1.0);
            b.fixed_path(observed[t][v], acc[v], 1.0);
        }
    }
    if constrained {
        derived = Some(Derived::SteadyStateLoading { phi: phi_entries(&b.params), factors: acc, initial: observed[1] });
    }
    b.finish(observed, derived, Vec::new(), None)
}

fn compile_lcm_sr(mut b: Builder) -> ModelSpec {
    let t_max = b.t;
    let (ox1, oy1) = (obs(1, Variable::X), obs(1, Variable::Y));
    let growth = [
        b.node("Ix", NodeKind::Factor),
        b.node("Sx", NodeKind::Factor),
        b.node("Iy", NodeKind::Factor),
        b.node("Sy", NodeKind::Factor),
    ];
    let labels = ["ix", "sx", "iy", "sy"];
    let vars = [Variable::X, Variable::X, Variable::Y, Variable::Y];
    let mean_rules = if t_max >= 2 {
        [
            StartRule::Mean(ox1),
            StartRule::MeanDiff(obs(2, Variable::X), ox1),
            StartRule::Mean(oy1),
            StartRule::MeanDiff(obs(2, Variable::Y), oy1),
        ]
    } else {
        [StartRule::Mean(ox1), StartRule::Const(0.0), StartRule::Mean(oy1), StartRule::Const(0.0)]
    };
    for k in 0..4 {
        b.param(
            format!("growth_mean_{}", labels[k]),
            ParamRole::GrowthMean,
            Some(vars[k]),
            None,
            None,
            Target::Intercept(growth[k]),
            mean_rules[k],
        );
    }
    let mut members = vec![vec![None; 4]; 4];
    for k in 0..4 {
        let j = if vars[k] == Variable::X { ox1 } else { oy1 };
        let frac = if k % 2 == 0 { 0.5 } else { 0.05 };
        members[k][k] = Some(b.param(
            format!("growth_var_{}", labels[k]),
            ParamRole::GrowthVariance,
            Some(vars[k]),
            None,
            None,
            Target::cov(growth[k], growth[k]),
            StartRule::Var(j, frac),
        ));
    }
    for k in 0..4 {
        for l in (k + 1)..4 {
            let e = b.param(
                format!("growth_cov_{}_{}", labels[k], labels[l]),
                ParamRole::GrowthCovariance,
                None,
                None,
                None,
                Target::cov(growth[k], growth[l]),
                StartRule::Const(0.0),
            );
            members[k][l] = Some(e);
            members[l][k] = Some(e);
        }
    }
    b.blocks.push(CovBlock { label: "growth".into(), factor: true, members });

    let mut dev = placeholder_pairs(t_max);
    dev[1] = b.pair("x*1".into(), "y*1".into(), NodeKind::Deviation);
    b.initial_block(dev[1], false, 0.5);
    let d = b.innovations(0.5);
    for t in 2..=t_max {
        dev[t] = b.pair(format!("x*{t}"), format!("y*{t}"), NodeKind::Deviation);
        b.coefficients(t, dev[t - 1], dev[t]);
        for v in 0..2 {
            b.fixed_path(dev[t][v], d[t][v], 1.0);
        }
    }
    let mut observed = placeholder_pairs(t_max);
    for t in 1..=t_max {
        observed[t] = b.pair(format!("x{t}"), format!("y{t}"), NodeKind::Observed);
        for v in 0..2 {
            b.fixed_path(observed[t][v], growth[2 * v], 1.0);
            if t > 1 {
                b.fixed_path(observed[t][v], growth[2 * v + 1], (t - 1) as f64);
            }
            b.fixed_path(observed[t][v], dev[t][v], 1.0);
        }
    }
    let deviation = dev[1..].to_vec();
    b.finish(observed, None, deviation, None)
}

fn compile_lcs(mut b: Builder) -> ModelSpec {
    let t_max = b.t;
    let zero_res = b.profile.lcs_zero_residuals;
    let acc = b.pair("Ax".into(), "Ay".into(), NodeKind::Factor);
    for (v, &n) in Variable::BOTH.iter().zip(&acc) {
        let lags = [obs(1, Variable::X), obs(1, Variable::Y)];
        b.param(
            format!("acc_mean_{}", v.letter()),
            ParamRole::AccumulatingMean,
            Some(*v),
            None,
            None,
            Target::Intercept(n),
            StartRule::Intercept { obs: obs(2, *v), lags },
        );
    }
    b.factor_block(
        "acc",
        "accumulating",
        acc,
        (ParamRole::AccumulatingVariance, ParamRole::AccumulatingCovariance),
        0.25,
        2,
    );
    let mut f = placeholder_pairs(t_max);
    f[1] = b.pair("fx1".into(), "fy1".into(), NodeKind::TrueScore);
    b.initial_block(f[1], true, 0.5);
    for (fi, &a) in acc.iter().enumerate() {
        for v in Variable::BOTH {
            b.param(
                format!("acc_init_cov_a{}_{}1", ["x", "y"][fi], v.letter()),
                ParamRole::FactorInitialCovariance,
                Some(v),
                Some(1),
                None,
                Target::cov(a, f[1][v.index()]),
                StartRule::Const(0.0),
            );
        }
    }
    let d = if zero_res { Vec::new() } else { b.innovations(0.5) };
    let mut errors = placeholder_pairs(t_max);
    for t in 1..=t_max {
        errors[t] = b.pair(format!("ex{t}"), format!("ey{t}"), NodeKind::MeasurementError);
        let members = b.cov_triple(
            "err",
            Some(t),
            true,
            true,
            errors[t],
            (ParamRole::ErrorVariance, ParamRole::ErrorCovariance),
            [StartRule::Var(obs(1, Variable::X), 0.5), StartRule::Var(obs(1, Variable::Y), 0.5)],
            StartRule::Const(0.0),
        );
        if t == 1 {
            b.blocks.push(CovBlock { label: "measurement_error".into(), factor: false, members });
        }
    }
    for t in 2..=t_max {
        f[t] = b.pair(format!("fx{t}"), format!("fy{t}"), NodeKind::TrueScore);
        b.coefficients(t, f[t - 1], f[t]);
        for v in 0..2 {
            b.fixed_path(f[t][v], acc[v], 1.0);
            if !zero_res {
                b.fixed_path(f[t][v], d[t][v], 1.0);
            }
        }
    }
    let mut observed = placeholder_pairs(t_max);
    for t in 1..=t_max {
        observed[t] = b.pair(format!("x{t}"), format!("y{t}"), NodeKind::Observed);
        for v in 0..2 {
            b.fixed_path(observed[t][v], f[t][v], 1.0);
            b.fixed_path(observed[t][v], errors[t][v], 1.0);
        }
    }
    b.finish(observed, None, Vec::new(), None)
}

fn compile_gclm(mut b: Builder) -> ModelSpec {
    let t_max = b.t;
    let acc = b.pair("Bx".into(), "By".into(), NodeKind::Factor);
    b.factor_block(
        "acc",
        "accumulating",
        acc,
        (ParamRole::AccumulatingVariance, ParamRole::AccumulatingCovariance),
        0.25,
        2,
    );
    let mut observed = placeholder_pairs(t_max);
    observed[1] = b.pair("x1".into(), "y1".into(), NodeKind::Observed);
    b.initial_block(observed[1], true, 1.0);
    let d = b.innovations(0.5);
    let tied = b.profile.coefficients_time_invariant;
    for t in 2..=t_max {
        observed[t] = b.pair(format!("x{t}"), format!("y{t}"), NodeKind::Observed);
        b.intercepts(t, observed[t]);
        b.coefficients(t, observed[t - 1], observed[t]);
        for v in Variable::BOTH {
            let (to, vi) = (observed[t][v.index()], v.index());
            b.fixed_path(to, d[t][vi], 1.0);
            if b.profile.gclm_loadings_time_varying && t >= 3 {
                b.param(
                    format!("lambda_{}_t{t}", v.letter()),
                    ParamRole::Loading,
                    Some(v),
                    Some(t),
                    None,
                    Target::Path { to, from: acc[vi] },
                    StartRule::Const(1.0),
                );
            } else {
                b.fixed_path(to, acc[vi], 1.0);
            }
        }
        if b.profile.gclm_include_ma && t >= 3 {
            let specs = [
                ("delta_x", ParamRole::MovingAverage, Variable::X, observed[t][0], d[t - 1][0]),
                ("zeta_x", ParamRole::CrossLaggedMovingAverage, Variable::X, observed[t][0], d[t - 1][1]),
                ("delta_y", ParamRole::MovingAverage, Variable::Y, observed[t][1], d[t - 1][1]),
                ("zeta_y", ParamRole::CrossLaggedMovingAverage, Variable::Y, observed[t][1], d[t - 1][0]),
            ];
            for (base, role, v, to, from) in specs {
                b.param(
                    format!("{base}_t{t}"),
                    role,
                    Some(v),
                    Some(t),
                    tied.then(|| base.to_string()),
                    Target::Path { to, from },
                    StartRule::Const(START_COEFFICIENT),
                );
            }
        }
    }
    b.finish(observed, None, Vec::new(), None)
}

/// The eight Table-1 style configurations at `t_waves`: CLPM, RI-CLPM,
/// predetermined RI-CLPM and DPM, each time-invariant and time-varying (the
/// RI-CLPM time-varying variant keeps residuals tied).
pub fn comparison_menu(t_waves: usize) -> Result<Vec<ModelSpec>, CatalogError> {
    let ti = ConstraintProfile::time_invariant();
    let tv = ConstraintProfile::time_varying();
    let tv_star = ConstraintProfile { residuals_time_invariant: true, ..tv };
    [
        (ModelKind::Clpm, ti),
        (ModelKind::Clpm, tv),
        (ModelKind::RiClpm, ti),
        (ModelKind::RiClpm, tv_star),
        (ModelKind::PredeterminedRiClpm, ti),
        (ModelKind::PredeterminedRiClpm, tv),
        (ModelKind::Dpm, ti),
        (ModelKind::Dpm, tv),
    ]
    .into_iter()
    .map(|(k, p)| build_spec(k, t_waves, p))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn df(kind: ModelKind, t: usize, p: ConstraintProfile) -> i64 {
        degrees_of_freedom(&build_spec(kind, t, p).unwrap())
    }

    #[test]
    fn table_one_degrees_of_freedom() {
        let got: Vec<i64> = comparison_menu(6).unwrap().iter().map(degrees_of_freedom).collect();
        assert_eq!(got, vec![68, 40, 65, 49, 61, 33, 61, 33]);
    }

    #[test]
    fn ri_clpm_time_invariant_count() {
        let s = build_spec(ModelKind::RiClpm, 6, ConstraintProfile::time_invariant()).unwrap();
        assert_eq!(s.free_count, 25);
        assert_eq!(degrees_of_freedom(&s), 65);
    }

    #[test]
    fn clpm_two_waves_is_just_identified() {
        let s = build_spec(ModelKind::Clpm, 2, ConstraintProfile::time_varying()).unwrap();
        assert_eq!(s.free_count, 14);
        assert_eq!(degrees_of_freedom(&s), 0);
    }

    #[test]
    fn starts_needs_four_waves() {
        let err = build_spec(ModelKind::Starts, 3, ConstraintProfile::time_invariant()).unwrap_err();
        assert!(matches!(err, CatalogError::InsufficientWaves { required: 4, got: 3, .. }));
    }

    #[test]
    fn conventional_minimums() {
        let tv = ConstraintProfile::time_varying();
        assert_eq!(min_waves(ModelKind::Clpm, &tv).unwrap(), 2);
        assert_eq!(min_waves(ModelKind::RiClpm, &tv).unwrap(), 3);
        assert_eq!(min_waves(ModelKind::RiClpm, &ConstraintProfile::time_invariant()).unwrap(), 3);
        assert_eq!(min_waves(ModelKind::PredeterminedRiClpm, &tv).unwrap(), 4);
        assert_eq!(min_waves(ModelKind::Starts, &tv).unwrap(), 4);
        for k in [ModelKind::LcmSr, ModelKind::Lcs, ModelKind::Gclm, ModelKind::Dpm] {
            assert_eq!(min_waves(k, &tv).unwrap(), 4, "{k}");
        }
    }

    #[test]
    fn gclm_with_every_option_needs_more_waves() {
        let p = ConstraintProfile { gclm_include_ma: true, gclm_loadings_time_varying: true, ..Default::default() };
        assert_eq!(min_waves(ModelKind::Gclm, &p).unwrap(), 5);
        assert!(df(ModelKind::Gclm, 5, p) >= 0);
    }

    #[test]
    fn incompatible_flags() {
        let p = ConstraintProfile { lcs_zero_residuals: true, ..Default::default() };
        assert!(matches!(build_spec(ModelKind::Clpm, 4, p), Err(CatalogError::IncompatibleProfile(_))));
        let p = ConstraintProfile { starts_stationarity: true, ..Default::default() };
        assert!(matches!(build_spec(ModelKind::Starts, 5, p), Err(CatalogError::IncompatibleProfile(_))));
        let p = ConstraintProfile { dpm_constrained_initial_loadings: true, ..Default::default() };
        assert!(matches!(min_waves(ModelKind::Dpm, &p), Err(CatalogError::IncompatibleProfile(_))));
    }

    #[test]
    fn build_is_deterministic() {
        for k in ModelKind::ALL {
            let a = build_spec(k, 5, ConstraintProfile::time_invariant()).unwrap();
            let b = build_spec(k, 5, ConstraintProfile::time_invariant()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fixing_trait_block_matches_clpm_count() {
        for (t, p) in [(6, ConstraintProfile::time_invariant()), (4, ConstraintProfile::time_varying())] {
            let ri = build_spec(ModelKind::RiClpm, t, p)
                .unwrap()
                .fix_all(&[("trait_var_x", 0.0), ("trait_var_y", 0.0), ("trait_cov_xy", 0.0)])
                .unwrap();
            let clpm = build_spec(ModelKind::Clpm, t, p).unwrap();
            assert_eq!(ri.free_count, clpm.free_count);
        }
    }

    #[test]
    fn tied_entries_share_positions() {
        let s = build_spec(ModelKind::Clpm, 4, ConstraintProfile::time_invariant()).unwrap();
        let pos: Vec<_> = (2..=4).map(|t| s.entry(&format!("beta_x_t{t}")).unwrap().position()).collect();
        assert!(pos.iter().all(|p| *p == pos[0] && p.is_some()));
        assert!(matches!(s.entry("beta_x_t3").unwrap().status, ParamStatus::Tied(_)));
        assert_eq!(s.param_names()[pos[0].unwrap()], "beta_x");
        let s = build_spec(ModelKind::Clpm, 4, ConstraintProfile::time_varying()).unwrap();
        assert_eq!(s.entry("beta_x_t3").unwrap().status, ParamStatus::Free);
    }

    #[test]
    fn predetermined_adds_four_covariances() {
        for p in [ConstraintProfile::time_invariant(), ConstraintProfile::time_varying()] {
            let a = build_spec(ModelKind::RiClpm, 5, p).unwrap();
            let b = build_spec(ModelKind::PredeterminedRiClpm, 5, p).unwrap();
            assert_eq!(b.free_count, a.free_count + 4);
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let spec = build_spec(ModelKind::Gclm, 5, ConstraintProfile { gclm_include_ma: true, ..Default::default() })
            .unwrap()
            .fix("acc_cov_xy", 0.0)
            .unwrap();
        let d = ModelDescriptor::of(&spec);
        let text = d.to_toml();
        let back = ModelDescriptor::from_toml(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.build().unwrap(), spec);
        assert!(ModelDescriptor::from_toml("kind = \"clpm\"\nwaves = 3\nbogus = 1\n").is_err());
    }

    #[test]
    fn unknown_parameter() {
        let s = build_spec(ModelKind::Clpm, 3, ConstraintProfile::default()).unwrap();
        assert!(matches!(s.fix("nope", 0.0), Err(CatalogError::UnknownParameter(_))));
    }

    #[test]
    fn kinds_parse_from_slugs() {
        for k in ModelKind::ALL {
            assert_eq!(k.slug().parse::<ModelKind>().unwrap(), k);
        }
        assert!("alt".parse::<ModelKind>().is_err());
    }
}
