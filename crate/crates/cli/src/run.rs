//! Executes a [`RunConfig`] and writes its artifacts: a TOML report that embeds
//! the config and the library version, and an aligned text table.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use panelsem::assessment::IndexNote;
use panelsem::equivalence::coefficient_label;
use panelsem::panel_data::PanelDataError;
use panelsem::{
    compare_fits, compare_menu, comparison_menu, degrees_of_freedom, fit, fit_indices, load_wide,
    residual_correlations, simulate, trait_variance_ratio, write_wide, ComparisonTable, EquivalenceReport, FitIndices,
    FitResult, ImproperFlag, ModelDescriptor, ModelKind, ModelSpec, PanelData, SimPlan, TraitVarianceRatio, Variable,
    Verdict,
};
use serde::Serialize;

use crate::config::{Command, RunConfig};
use crate::error::CliError;

/// Paths of the files a successful run wrote.
pub type Written = Vec<PathBuf>;

pub fn run(config: &RunConfig) -> Result<Written, CliError> {
    config.validate()?;
    match config.command {
        Command::Fit => run_fit(config),
        Command::Simulate => run_simulate(config),
        Command::Compare => run_compare(config),
        Command::CheckEquivalence => run_check(config),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load_data(config: &RunConfig) -> Result<PanelData, CliError> {
    let path = config.data.as_ref().expect("validated");
    let file = File::open(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    load_wide(file).map_err(|source| CliError::Data { path: path.clone(), source })
}

fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("reports are serializable")
}

#[derive(Serialize)]
struct Summary {
    label: String,
    n: usize,
    waves: usize,
    free_parameters: usize,
    df: i64,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
    loglik: f64,
    discrepancy: f64,
    best_start: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    se_error: Option<String>,
}

#[derive(Serialize)]
struct Correlations {
    variables: Vec<String>,
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    version: &'static str,
    run: &'a RunConfig,
    model: ModelDescriptor,
    summary: Summary,
    estimates: toml::Table,
    #[serde(skip_serializing_if = "toml::Table::is_empty")]
    standard_errors: toml::Table,
    #[serde(skip_serializing_if = "Option::is_none")]
    indices: Option<FitIndices>,
    improper: Vec<ImproperFlag>,
    residual_correlations: Correlations,
    trait_variance_ratios: Vec<TraitVarianceRatio>,
}

fn observed_labels(data: &PanelData) -> Vec<String> {
    (1..=data.t_waves()).flat_map(|t| [format!("{}{t}", data.x_name()), format!("{}{t}", data.y_name())]).collect()
}

fn fit_report<'a>(config: &'a RunConfig, data: &PanelData, r: &FitResult) -> FitReport<'a> {
    let names = r.spec.param_names();
    let estimates: toml::Table =
        names.iter().zip(&r.theta_hat).map(|(n, v)| (n.clone(), toml::Value::Float(*v))).collect();
    let standard_errors: toml::Table = match &r.se {
        Some(se) => names.iter().zip(se).map(|(n, v)| (n.clone(), toml::Value::Float(*v))).collect(),
        None => toml::Table::new(),
    };
    let resid = residual_correlations(r);
    let decomposes = matches!(r.spec.kind, ModelKind::RiClpm | ModelKind::Starts);
    let ratios = if decomposes {
        (1..=r.spec.t_waves)
            .flat_map(|t| Variable::BOTH.map(|v| trait_variance_ratio(r, v, t)))
            .filter_map(Result::ok)
            .collect()
    } else {
        Vec::new()
    };
    FitReport {
        version: panelsem::VERSION,
        run: config,
        model: ModelDescriptor::of(&r.spec),
        summary: Summary {
            label: r.spec.label(),
            n: r.n(),
            waves: r.spec.t_waves,
            free_parameters: r.spec.free_count,
            df: degrees_of_freedom(&r.spec),
            converged: r.converged,
            iterations: r.iterations,
            gradient_norm: r.gradient_norm,
            loglik: r.loglik,
            discrepancy: r.discrepancy,
            best_start: r.best_start,
            se_error: r.se_error.clone(),
        },
        estimates,
        standard_errors,
        indices: fit_indices(r).ok(),
        improper: r.improper_flags.clone(),
        residual_correlations: Correlations {
            variables: observed_labels(data),
            rows: resid.row_iter().map(|row| row.iter().copied().collect()).collect(),
        },
        trait_variance_ratios: ratios,
    }
}

fn fit_text(report: &FitReport) -> String {
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(out, "{}  N = {}  T = {}", s.label, s.n, s.waves);
    let _ = writeln!(
        out,
        "converged: {}  iterations: {}  log-likelihood: {:.4}  free parameters: {}  df: {}",
        s.converged, s.iterations, s.loglik, s.free_parameters, s.df
    );
    if let Some(i) = &report.indices {
        let p = if i.notes.contains(&IndexNote::ZeroDf) { "n/a".to_string() } else { format!("{:.4}", i.p_value) };
        let _ = writeln!(
            out,
            "chi2 = {:.3}  p = {p}  CFI = {:.3}  RMSEA = {:.3}  SRMR = {:.3}  AIC = {:.2}  BIC = {:.2}",
            i.chi_square, i.cfi, i.rmsea, i.srmr, i.aic, i.bic
        );
    }
    out.push('\n');
    let width = report.estimates.keys().map(String::len).max().unwrap_or(9).max(9);
    let _ = writeln!(out, "{:<width$}  {:>10}  {:>10}  {:>8}", "parameter", "estimate", "se", "z");
    for (name, value) in &report.estimates {
        let est = value.as_float().unwrap_or(f64::NAN);
        match report.standard_errors.get(name).and_then(toml::Value::as_float) {
            Some(se) => {
                let _ = writeln!(out, "{name:<width$}  {est:>10.4}  {se:>10.4}  {:>8.2}", est / se);
            }
            None => {
                let _ = writeln!(out, "{name:<width$}  {est:>10.4}  {:>10}  {:>8}", "-", "-");
            }
        }
    }
    if let Some(e) = &s.se_error {
        let _ = writeln!(out, "\nstandard errors unavailable: {e}");
    }
    if !report.improper.is_empty() {
        let _ = writeln!(out, "\nimproper solution:");
        for f in &report.improper {
            let _ = writeln!(out, "  {f}");
        }
    }
    if !report.trait_variance_ratios.is_empty() {
        let _ = writeln!(out, "\ntrait variance share");
        for r in &report.trait_variance_ratios {
            let _ = writeln!(out, "  {}{}  {:.3}", r.variable.letter(), r.wave, r.value);
        }
    }
    out
}

fn run_fit(config: &RunConfig) -> Result<Written, CliError> {
    let data = load_data(config)?;
    let spec = config.models[0].spec(data.t_waves())?;
    let r = fit(&spec, &data, &config.fit)?;
    let report = fit_report(config, &data, &r);
    let table = config.table_path();
    write_file(&config.out, &to_toml(&report))?;
    write_file(&table, &fit_text(&report))?;
    if !r.converged {
        return Err(CliError::NotConverged(format!(
            "fit did not converge (gradient norm {:.3e} after {} iterations); report written to {}",
            r.gradient_norm,
            r.iterations,
            config.out.display()
        )));
    }
    Ok(vec![config.out.clone(), table])
}

fn read_params(path: &Path) -> Result<HashMap<String, f64>, CliError> {
    let table: toml::Table =
        toml::from_str(&read_file(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    table
        .into_iter()
        .map(|(k, v)| match v {
            toml::Value::Float(x) => Ok((k, x)),
            toml::Value::Integer(i) => Ok((k, i as f64)),
            other => {
                Err(CliError::Usage(format!("{}: `{k}` must be a number, found {}", path.display(), other.type_str())))
            }
        })
        .collect()
}

#[derive(Serialize)]
struct SimulationManifest<'a> {
    version: &'static str,
    run: &'a RunConfig,
    model: ModelDescriptor,
    data: &'a Path,
}

fn run_simulate(config: &RunConfig) -> Result<Written, CliError> {
    let spec = config.models[0].spec(config.waves.expect("validated"))?;
    let values = read_params(config.params.as_ref().expect("validated"))?;
    let theta = spec.theta_from_map(&values)?;
    let plan = SimPlan::new(spec.clone(), theta, config.n.expect("validated"), config.seed)
        .with_burn_in(config.burn_in)
        .with_execution(config.fit.execution);
    let data = simulate(&plan)?;
    let file = File::create(&config.out).map_err(|source| CliError::Io { path: config.out.clone(), source })?;
    write_wide(&data, BufWriter::new(file)).map_err(|source| match source {
        PanelDataError::Io(source) => CliError::Io { path: config.out.clone(), source },
        source => CliError::Data { path: config.out.clone(), source },
    })?;
    let manifest_path = config.out.with_extension("run.toml");
    let manifest = SimulationManifest {
        version: panelsem::VERSION,
        run: config,
        model: ModelDescriptor::of(&spec),
        data: &config.out,
    };
    write_file(&manifest_path, &to_toml(&manifest))?;
    Ok(vec![config.out.clone(), manifest_path])
}

#[derive(Serialize)]
struct CompareReport<'a> {
    version: &'static str,
    run: &'a RunConfig,
    comparison: ComparisonTable,
}

fn run_compare(config: &RunConfig) -> Result<Written, CliError> {
    let data = load_data(config)?;
    let specs: Vec<ModelSpec> = if config.models.is_empty() {
        comparison_menu(data.t_waves())?
    } else {
        config.models.iter().map(|m| m.spec(data.t_waves())).collect::<Result<_, _>>()?
    };
    let mut table = compare_menu(&data, &specs, &config.fit, config.fit.execution);
    if let Some(key) = config.sort {
        table.sort_by(key);
    }
    let mut text = String::new();
    for (i, row) in table.rows.iter().enumerate() {
        let _ = writeln!(text, "[{}] {}", i + 1, row.label);
    }
    let _ = writeln!(text, "N = {}  T = {}\n", table.n, table.waves);
    text.push_str(&table.to_text());
    let report = CompareReport { version: panelsem::VERSION, run: config, comparison: table };
    let table_path = config.table_path();
    write_file(&config.out, &to_toml(&report))?;
    write_file(&table_path, &text)?;
    Ok(vec![config.out.clone(), table_path])
}

#[derive(Serialize)]
struct EquivalenceFile<'a> {
    version: &'static str,
    run: &'a RunConfig,
    equivalence: &'a EquivalenceReport,
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Equivalent => "equivalent",
        Verdict::NotEquivalent => "not equivalent",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn equivalence_text(r: &EquivalenceReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "A: {}\nB: {}", r.label_a, r.label_b);
    let _ = writeln!(out, "verdict: {}", verdict_name(r.verdict));
    if let Some(note) = &r.note {
        let _ = writeln!(out, "note: {note}");
    }
    let _ = writeln!(
        out,
        "log-likelihood A = {:.6}  B = {:.6}  |diff| = {:.3e} (tolerance {:.1e})",
        r.loglik_a, r.loglik_b, r.loglik_diff, r.tolerances.loglik
    );
    let _ = writeln!(out, "max coefficient diff = {:.3e} (tolerance {:.1e})", r.max_coef_diff, r.tolerances.coef);
    let _ = writeln!(out, "max standard error diff = {:.3e} (tolerance {:.1e})\n", r.max_se_diff, r.tolerances.se);
    let _ = writeln!(out, "{:<16}  {:>10}  {:>10}  {:>10}  {:>10}", "coefficient", "A", "B", "se A", "se B");
    let se = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for c in &r.matched {
        let name = coefficient_label(c.role, c.variable, c.wave);
        let _ = writeln!(
            out,
            "{name:<16}  {:>10.4}  {:>10.4}  {:>10}  {:>10}",
            c.estimate_a,
            c.estimate_b,
            se(c.se_a),
            se(c.se_b)
        );
    }
    out
}

fn run_check(config: &RunConfig) -> Result<Written, CliError> {
    let data = load_data(config)?;
    let a = config.models[0].spec(data.t_waves())?;
    let b = config.models[1].spec(data.t_waves())?;
    let fa = fit(&a, &data, &config.fit)?;
    let fb = fit(&b, &data, &config.fit)?;
    let report = compare_fits(&fa, &fb, config.tolerances);
    let file = EquivalenceFile { version: panelsem::VERSION, run: config, equivalence: &report };
    let table = config.table_path();
    write_file(&config.out, &to_toml(&file))?;
    write_file(&table, &equivalence_text(&report))?;
    if !(fa.converged && fb.converged) {
        return Err(CliError::NotConverged(format!(
            "a fit did not converge; report written to {}",
            config.out.display()
        )));
    }
    Ok(vec![config.out.clone(), table])
}
