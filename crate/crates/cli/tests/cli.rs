use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const RI_CLPM_TI: &str = "\
trait_var_x = 1.0
trait_var_y = 0.8
trait_cov_xy = 0.3
init_var_x = 1.2
init_var_y = 1.0
init_cov_xy = 0.25
res_var_x = 1.0
res_var_y = 0.8
res_cov_xy = 0.2
beta_x = 0.4
gamma_x = 0.1
beta_y = 0.3
gamma_y = 0.15
mu_x_t1 = 1.0
mu_y_t1 = 2.0
mu_x_t2 = 1.1
mu_y_t2 = 1.9
mu_x_t3 = 1.2
mu_y_t3 = 1.8
mu_x_t4 = 1.3
mu_y_t4 = 1.7
mu_x_t5 = 1.4
mu_y_t5 = 1.6
mu_x_t6 = 1.5
mu_y_t6 = 1.5
";

fn panelsem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panelsem")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// RI-CLPM (time-invariant) data with T = 6 written through the CLI.
fn ri_clpm_data(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let params = dir.join("p.toml");
    std::fs::write(&params, RI_CLPM_TI).unwrap();
    let out = dir.join(format!("d{seed}.csv"));
    let o = panelsem(&[
        "simulate",
        "--model",
        "ri-clpm",
        "--time-invariant",
        "--params",
        s(&params),
        "--n",
        &n.to_string(),
        "--waves",
        "6",
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn read_toml(p: &Path) -> toml::Table {
    toml::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_modes() {
    let dir = tempfile::tempdir().unwrap();
    let a = ri_clpm_data(dir.path(), 500, 7);
    let first = std::fs::read(&a).unwrap();
    let b = ri_clpm_data(dir.path(), 500, 7);
    assert_eq!(first, std::fs::read(&b).unwrap());

    let params = dir.path().join("p.toml");
    let seq = dir.path().join("seq.csv");
    let o = panelsem(&[
        "simulate",
        "--model",
        "ri-clpm+time-invariant",
        "--params",
        s(&params),
        "--n",
        "500",
        "--waves",
        "6",
        "--seed",
        "7",
        "--sequential",
        "--out",
        s(&seq),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, std::fs::read(&seq).unwrap());

    let other = ri_clpm_data(dir.path(), 500, 8);
    assert_ne!(first, std::fs::read(other).unwrap());
    let manifest = read_toml(&dir.path().join("d7.run.toml"));
    assert_eq!(manifest["run"]["seed"].as_integer(), Some(7));
}

#[test]
fn fit_report_has_df_65_and_embeds_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = ri_clpm_data(dir.path(), 600, 1);
    let report = dir.path().join("fit.toml");
    let o = panelsem(&["fit", "--data", s(&data), "--model", "ri-clpm", "--time-invariant", "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_toml(&report);
    assert_eq!(r["indices"]["df"].as_integer(), Some(65));
    assert_eq!(r["summary"]["df"].as_integer(), Some(65));
    assert_eq!(r["summary"]["free_parameters"].as_integer(), Some(25));
    assert_eq!(r["run"]["command"].as_str(), Some("fit"));
    assert_eq!(r["version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    assert!(r["estimates"]["beta_x"].as_float().is_some());
    assert!(r["standard_errors"]["beta_x"].as_float().unwrap() > 0.0);
    assert_eq!(r["residual_correlations"]["rows"].as_array().unwrap().len(), 12);
    assert_eq!(r["trait_variance_ratios"].as_array().unwrap().len(), 12);
    let text = std::fs::read_to_string(dir.path().join("fit.txt")).unwrap();
    assert!(text.contains("df: 65"));
}

#[test]
fn replaying_a_report_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let data = ri_clpm_data(dir.path(), 400, 2);
    let report = dir.path().join("fit.toml");
    let o = panelsem(&["fit", "--data", s(&data), "--model", "clpm+time-invariant", "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(&report).unwrap();
    let o = panelsem(&["--config", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, std::fs::read(&report).unwrap());
}

#[test]
fn starts_with_three_waves_is_an_identification_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("t3.csv");
    let mut text = String::from("id,x1,x2,x3,y1,y2,y3\n");
    for i in 0..50 {
        let v = i as f64;
        text += &format!(
            "{i},{},{},{},{},{},{}\n",
            v.sin(),
            (2.0 * v).cos(),
            (0.3 * v).sin(),
            v.cos(),
            (1.7 * v).sin(),
            (0.5 * v).cos()
        );
    }
    std::fs::write(&data, text).unwrap();
    let o = panelsem(&["fit", "--data", s(&data), "--model", "starts", "--out", s(&dir.path().join("r.toml"))]);
    assert_eq!(o.status.code(), Some(3));
    let msg = stderr(&o);
    assert!(msg.contains("model_catalog::InsufficientWaves"), "{msg}");
    assert!(msg.contains("at least 4 waves"), "{msg}");
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.toml");
    let o = panelsem(&["fit", "--model", "clpm", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let o = panelsem(&["fit", "--data", "nowhere.csv", "--model", "clpm+sideways", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cli::Usage"));
    let o = panelsem(&["fit", "--data", "nowhere.csv", "--model", "clpm", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cli::Io"));
    let o = panelsem(&["fit", "--data", "nowhere.csv", "--model", "clpm", "--gclm-ma", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model_catalog::IncompatibleProfile"));

    let params = dir.path().join("p.toml");
    std::fs::write(&params, format!("{RI_CLPM_TI}bogus = 1\n")).unwrap();
    let o = panelsem(&[
        "simulate",
        "--model",
        "ri-clpm",
        "--time-invariant",
        "--params",
        s(&params),
        "--n",
        "50",
        "--waves",
        "6",
        "--out",
        s(&dir.path().join("d.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model_catalog::UnknownParameter"));
    std::fs::write(&params, "beta_x = 0.4\n").unwrap();
    let o = panelsem(&[
        "simulate",
        "--model",
        "ri-clpm",
        "--time-invariant",
        "--params",
        s(&params),
        "--n",
        "50",
        "--waves",
        "6",
        "--out",
        s(&dir.path().join("d.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model_catalog::MissingParameters"));
    assert!(stderr(&o).contains("beta_y, "));

    let config = dir.path().join("run.toml");
    std::fs::write(&config, "command = \"fit\"\nout = \"r.toml\"\ncolour = 1\n").unwrap();
    let o = panelsem(&["--config", s(&config)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn non_convergence_exits_2_after_writing_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = ri_clpm_data(dir.path(), 300, 3);
    let report = dir.path().join("fit.toml");
    let o = panelsem(&[
        "fit",
        "--data",
        s(&data),
        "--model",
        "ri-clpm",
        "--max-iterations",
        "2",
        "--multistart",
        "1",
        "--out",
        s(&report),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("ml_estimator::NotConverged"));
    assert_eq!(read_toml(&report)["summary"]["converged"].as_bool(), Some(false));
}

#[test]
fn compare_default_menu_and_sorting() {
    let dir = tempfile::tempdir().unwrap();
    let data = ri_clpm_data(dir.path(), 800, 4);
    let report = dir.path().join("cmp.toml");
    let o = panelsem(&["compare", "--data", s(&data), "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_toml(&report);
    let rows = r["comparison"]["rows"].as_array().unwrap();
    let df: Vec<i64> = rows.iter().map(|row| row["df"].as_integer().unwrap()).collect();
    assert_eq!(df, vec![68, 40, 65, 49, 61, 33, 61, 33]);
    let text = std::fs::read_to_string(dir.path().join("cmp.txt")).unwrap();
    assert!(text.contains("AIC") && text.contains("gamma_x"));

    let sorted = dir.path().join("sorted.toml");
    let o = panelsem(&[
        "compare",
        "--data",
        s(&data),
        "--model",
        "clpm+time-invariant",
        "--model",
        "ri-clpm+time-invariant",
        "--sort",
        "aic",
        "--out",
        s(&sorted),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_toml(&sorted);
    let rows = r["comparison"]["rows"].as_array().unwrap();
    let aic: Vec<f64> = rows.iter().map(|row| row["indices"]["aic"].as_float().unwrap()).collect();
    assert!(aic[0] <= aic[1]);
    // trait variance is large relative to the within part, so RI-CLPM wins
    assert_eq!(rows[0]["model"]["kind"].as_str(), Some("ri-clpm"));
}

#[test]
fn check_equivalence_of_predetermined_and_dpm() {
    let dir = tempfile::tempdir().unwrap();
    let data = ri_clpm_data(dir.path(), 1000, 5);
    let report = dir.path().join("eq.toml");
    let o = panelsem(&[
        "check-equivalence",
        "--data",
        s(&data),
        "--model",
        "predetermined-ri-clpm+time-invariant",
        "--model",
        "dpm+time-invariant",
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_toml(&report);
    assert_eq!(r["equivalence"]["verdict"].as_str(), Some("equivalent"));
    assert_eq!(r["run"]["tolerances"]["coef"].as_float(), Some(1e-4));

    let o = panelsem(&[
        "check-equivalence",
        "--data",
        s(&data),
        "--model",
        "clpm+time-invariant",
        "--model",
        "ri-clpm+time-invariant",
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_toml(&report)["equivalence"]["verdict"].as_str(), Some("not-equivalent"));
}
