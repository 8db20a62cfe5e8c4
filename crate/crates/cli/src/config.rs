//! The resolved run configuration. Every command line is turned into a
//! [`RunConfig`] before anything runs, and every report embeds it, so a report
//! can be replayed with `panelsem --config report.toml`.

use std::path::PathBuf;

use panelsem::{build_spec, ConstraintProfile, FitOptions, ModelKind, ModelSpec, SortKey, Tolerances};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Fit,
    Simulate,
    Compare,
    CheckEquivalence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::CheckEquivalence => "check-equivalence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedValue {
    pub name: String,
    pub value: f64,
}

/// A model without its wave count, which comes from the data or from `waves`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelChoice {
    pub kind: ModelKind,
    #[serde(default)]
    pub profile: ConstraintProfile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<FixedValue>,
}

/// Profile flag names shared by the command-line switches and by `+`-joined
/// model descriptors such as `dpm+time-invariant+dpm-constrained`.
pub const PROFILE_FLAGS: [&str; 9] = [
    "time-invariant",
    "time-varying",
    "coefficients-time-invariant",
    "residuals-time-invariant",
    "lcs-zero-residuals",
    "starts-stationarity",
    "gclm-ma",
    "gclm-varying-loadings",
    "dpm-constrained",
];

pub fn apply_flag(profile: &mut ConstraintProfile, flag: &str) -> Result<(), CliError> {
    match flag {
        "time-invariant" => {
            profile.coefficients_time_invariant = true;
            profile.residuals_time_invariant = true;
        }
        "time-varying" => {
            profile.coefficients_time_invariant = false;
            profile.residuals_time_invariant = false;
        }
        "coefficients-time-invariant" => profile.coefficients_time_invariant = true,
        "residuals-time-invariant" => profile.residuals_time_invariant = true,
        "lcs-zero-residuals" => profile.lcs_zero_residuals = true,
        "starts-stationarity" => profile.starts_stationarity = true,
        "gclm-ma" => profile.gclm_include_ma = true,
        "gclm-varying-loadings" => profile.gclm_loadings_time_varying = true,
        "dpm-constrained" => profile.dpm_constrained_initial_loadings = true,
        other => {
            return Err(CliError::Usage(format!(
                "unknown model flag `{other}`; expected one of {}",
                PROFILE_FLAGS.join(", ")
            )))
        }
    }
    Ok(())
}

impl ModelChoice {
    /// Parses `kind[+flag…]`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut parts = text.split('+').map(str::trim);
        let kind: ModelKind = parts.next().unwrap_or_default().parse()?;
        let mut profile = ConstraintProfile::default();
        for flag in parts {
            apply_flag(&mut profile, flag)?;
        }
        Ok(Self { kind, profile, fixed: Vec::new() })
    }

    pub fn spec(&self, waves: usize) -> Result<ModelSpec, CliError> {
        let spec = build_spec(self.kind, waves, self.profile)?;
        Ok(self.fixed.iter().try_fold(spec, |s, f| s.fix(&f.name, f.value))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Output report (fit, compare, check-equivalence) or data file (simulate).
    pub out: PathBuf,
    /// Human-readable table; defaults to `out` with a `.txt` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waves: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<SortKey>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub models: Vec<ModelChoice>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        // reports carry the config under [run]; bare configs are accepted too
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let value = match table.get("run") {
            Some(run) if !table.contains_key("command") => run.clone(),
            _ => toml::Value::Table(table),
        };
        value.try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))
    }

    pub fn table_path(&self) -> PathBuf {
        self.table.clone().unwrap_or_else(|| self.out.with_extension("txt"))
    }

    /// Checks that the fields the command needs are present and that every
    /// profile is legal for its model kind.
    pub fn validate(&self) -> Result<(), CliError> {
        for m in &self.models {
            panelsem::min_waves(m.kind, &m.profile)?;
        }
        let missing = |what: &str| Err(CliError::Usage(format!("{} needs {what}", self.command.name())));
        let needs_data = !matches!(self.command, Command::Simulate);
        if needs_data && self.data.is_none() {
            return missing("a data file (--data)");
        }
        match self.command {
            Command::Fit if self.models.len() != 1 => missing("exactly one model"),
            Command::CheckEquivalence if self.models.len() != 2 => missing("exactly two models"),
            Command::Simulate => {
                if self.models.len() != 1 {
                    return missing("exactly one model");
                }
                if self.params.is_none() {
                    return missing("a parameter file (--params)");
                }
                if self.n.is_none() {
                    return missing("a sample size (--n)");
                }
                if self.waves.is_none() {
                    return missing("a wave count (--waves)");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
