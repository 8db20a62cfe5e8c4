//! `panelsem`: fit, simulate, compare and check equivalence of bivariate
//! longitudinal panel models from the command line.

mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panelsem::{Execution, FitOptions, SortKey, Tolerances};

use config::{apply_flag, Command, FixedValue, ModelChoice, RunConfig};
use error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "panelsem", version, about = "Cross-lagged panel models by maximum likelihood")]
struct Cli {
    /// Run a saved configuration, or replay the run recorded in a report.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Fit one model to a wide-format data file.
    Fit {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Generate a data file from a model and its true parameter values.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Flat TOML file of `name = value` for every free parameter.
        #[arg(long, value_name = "FILE")]
        params: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        waves: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pre-study waves simulated and discarded.
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[arg(long)]
        sequential: bool,
        /// Data file to write.
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Fit several models to the same data and tabulate them side by side.
    /// Without any --model or --spec the standard eight-column menu is used.
    Compare {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[command(flatten)]
        models: ModelList,
        #[arg(long, value_enum)]
        sort: Option<SortArg>,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit two models and test whether their coefficients, standard errors and
    /// log-likelihoods coincide.
    CheckEquivalence {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[command(flatten)]
        models: ModelList,
        #[arg(long, value_name = "TOL")]
        coef_tol: Option<f64>,
        #[arg(long, value_name = "TOL")]
        se_tol: Option<f64>,
        #[arg(long, value_name = "TOL")]
        loglik_tol: Option<f64>,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SortArg {
    Aic,
    Bic,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model kind (clpm, ri-clpm, predetermined-ri-clpm, dpm, starts, lcm-sr,
    /// lcs, gclm), optionally followed by `+flag` profile switches.
    #[arg(long, value_name = "KIND", required_unless_present = "spec")]
    model: Option<String>,
    /// Model file with `kind`, an optional `[profile]` table and `[[fixed]]` entries.
    #[arg(long, value_name = "FILE", conflicts_with = "model")]
    spec: Option<PathBuf>,
    /// Tie coefficients and residual (co)variances across waves.
    #[arg(long)]
    time_invariant: bool,
    #[arg(long)]
    coefficients_time_invariant: bool,
    #[arg(long)]
    residuals_time_invariant: bool,
    #[arg(long)]
    lcs_zero_residuals: bool,
    #[arg(long)]
    starts_stationarity: bool,
    /// GCLM: add moving-average terms.
    #[arg(long)]
    gclm_ma: bool,
    /// GCLM: free the accumulating-factor loadings after wave 2.
    #[arg(long)]
    gclm_varying_loadings: bool,
    /// DPM: initial-wave loadings (I − Φ)⁻¹ instead of free covariances.
    #[arg(long)]
    dpm_constrained: bool,
    /// Fix a parameter, NAME=VALUE. Repeatable.
    #[arg(long = "fix", value_name = "NAME=VALUE")]
    fix: Vec<String>,
}

#[derive(Debug, Args)]
struct ModelList {
    /// Model as `kind[+flag...]`, e.g. `ri-clpm+time-invariant`. Repeatable.
    #[arg(long = "model", value_name = "DESCRIPTOR")]
    model: Vec<String>,
    /// Model file as accepted by `fit --spec`. Repeatable; listed after --model entries.
    #[arg(long = "spec", value_name = "FILE")]
    spec: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    gradient_tolerance: Option<f64>,
    /// Number of optimizer starts (the first is data-based, the rest jittered).
    #[arg(long)]
    multistart: Option<usize>,
    /// Seed for the jittered starts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Machine-readable TOML report.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Text table; defaults to the report path with a `.txt` extension.
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            gradient_tolerance: self.gradient_tolerance.unwrap_or(d.gradient_tolerance),
            multistart: self.multistart.unwrap_or(d.multistart),
            seed: self.seed,
            execution: execution(self.sequential),
            ..d
        }
    }
}

fn read_model_file(path: &PathBuf) -> Result<ModelChoice, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl ModelArgs {
    fn choice(&self) -> Result<ModelChoice, CliError> {
        let mut choice = match (&self.model, &self.spec) {
            (Some(m), _) => ModelChoice::parse(m)?,
            (None, Some(path)) => read_model_file(path)?,
            (None, None) => return Err(CliError::Usage("a model is required (--model or --spec)".into())),
        };
        let switches = [
            (self.time_invariant, "time-invariant"),
            (self.coefficients_time_invariant, "coefficients-time-invariant"),
            (self.residuals_time_invariant, "residuals-time-invariant"),
            (self.lcs_zero_residuals, "lcs-zero-residuals"),
            (self.starts_stationarity, "starts-stationarity"),
            (self.gclm_ma, "gclm-ma"),
            (self.gclm_varying_loadings, "gclm-varying-loadings"),
            (self.dpm_constrained, "dpm-constrained"),
        ];
        for (on, flag) in switches {
            if on {
                apply_flag(&mut choice.profile, flag)?;
            }
        }
        for item in &self.fix {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--fix expects NAME=VALUE, got `{item}`")))?;
            let value = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--fix {name}: `{value}` is not a number")))?;
            choice.fixed.push(FixedValue { name: name.trim().to_string(), value });
        }
        Ok(choice)
    }
}

impl ModelList {
    fn choices(&self) -> Result<Vec<ModelChoice>, CliError> {
        let mut out: Vec<ModelChoice> = self.model.iter().map(|m| ModelChoice::parse(m)).collect::<Result<_, _>>()?;
        for path in &self.spec {
            out.push(read_model_file(path)?);
        }
        Ok(out)
    }
}

fn base(command: Command, out: PathBuf) -> RunConfig {
    RunConfig {
        command,
        data: None,
        out,
        table: None,
        params: None,
        n: None,
        waves: None,
        seed: 0,
        burn_in: 0,
        sort: None,
        tolerances: Tolerances::default(),
        fit: FitOptions::default(),
        models: Vec::new(),
    }
}

fn resolve(cmd: Cmd) -> Result<RunConfig, CliError> {
    let config = match cmd {
        Cmd::Fit { data, model, fit, output } => RunConfig {
            data: Some(data),
            table: output.table,
            fit: fit.options(),
            models: vec![model.choice()?],
            ..base(Command::Fit, output.out)
        },
        Cmd::Simulate { model, params, n, waves, seed, burn_in, sequential, out } => RunConfig {
            params: Some(params),
            n: Some(n),
            waves: Some(waves),
            seed,
            burn_in,
            fit: FitOptions { execution: execution(sequential), ..FitOptions::default() },
            models: vec![model.choice()?],
            ..base(Command::Simulate, out)
        },
        Cmd::Compare { data, models, sort, fit, output } => RunConfig {
            data: Some(data),
            table: output.table,
            sort: sort.map(|s| match s {
                SortArg::Aic => SortKey::Aic,
                SortArg::Bic => SortKey::Bic,
            }),
            fit: fit.options(),
            models: models.choices()?,
            ..base(Command::Compare, output.out)
        },
        Cmd::CheckEquivalence { data, models, coef_tol, se_tol, loglik_tol, fit, output } => {
            let d = Tolerances::default();
            RunConfig {
                data: Some(data),
                table: output.table,
                tolerances: Tolerances {
                    coef: coef_tol.unwrap_or(d.coef),
                    se: se_tol.unwrap_or(d.se),
                    loglik: loglik_tol.unwrap_or(d.loglik),
                },
                fit: fit.options(),
                models: models.choices()?,
                ..base(Command::CheckEquivalence, output.out)
            }
        }
    };
    Ok(config)
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    RunConfig::from_toml(&text)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let config = match (cli.config, cli.command) {
        (Some(path), None) => load_config(&path),
        (None, Some(cmd)) => resolve(cmd),
        _ => Err(CliError::Usage("give a command or --config FILE; see --help".into())),
    };
    match config.and_then(|c| run::run(&c)) {
        Ok(written) => {
            for path in written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.source_name());
            ExitCode::from(e.exit_code())
        }
    }
}
