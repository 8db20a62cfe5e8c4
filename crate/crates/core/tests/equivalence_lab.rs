#![allow(clippy::needless_range_loop)]

mod common;

use panelsem::{
    build_spec, check_pair, compare_fits, compare_menu, comparison_menu, degrees_of_freedom, fit, simulate,
    ComparisonTable, ConstraintProfile, Execution, FitOptions, ModelKind, PanelData, SimPlan, SortKey, Tolerances,
    Verdict,
};

fn ri_data(t: usize, n: usize, seed: u64) -> PanelData {
    let spec = build_spec(ModelKind::RiClpm, t, ConstraintProfile::time_invariant()).unwrap();
    simulate(&SimPlan::new(spec.clone(), common::truth(&spec), n, seed)).unwrap()
}

#[test]
fn a_model_is_equivalent_to_itself() {
    let d = ri_data(4, 400, 81);
    let spec = build_spec(ModelKind::RiClpm, 4, ConstraintProfile::default()).unwrap();
    let r = fit(&spec, &d, &FitOptions::default()).unwrap();
    let rep = compare_fits(&r, &r, Tolerances::default());
    assert_eq!(rep.verdict, Verdict::Equivalent);
    assert_eq!(rep.max_coef_diff, 0.0);
    assert_eq!(rep.max_se_diff, 0.0);
    assert_eq!(rep.loglik_diff, 0.0);
    // β and γ for both variables at waves 2..4
    assert_eq!(rep.matched.len(), 12);
}

#[test]
fn time_varying_dpm_is_not_the_predetermined_model() {
    // with wave-specific coefficients the DPM's free trait loadings make it a different model
    let d = ri_data(5, 800, 82);
    let tv = ConstraintProfile::time_varying();
    let a = build_spec(ModelKind::PredeterminedRiClpm, 5, tv).unwrap();
    let b = build_spec(ModelKind::Dpm, 5, tv).unwrap();
    let rep = check_pair(&d, &a, &b, Tolerances::default(), &FitOptions::default()).unwrap();
    assert_eq!(rep.verdict, Verdict::NotEquivalent, "{rep:?}");
}

#[test]
fn clpm_and_ri_clpm_differ() {
    let d = ri_data(4, 600, 83);
    let ti = ConstraintProfile::time_invariant();
    let a = build_spec(ModelKind::Clpm, 4, ti).unwrap();
    let b = build_spec(ModelKind::RiClpm, 4, ti).unwrap();
    let rep = check_pair(&d, &a, &b, Tolerances::default(), &FitOptions::default()).unwrap();
    assert_eq!(rep.verdict, Verdict::NotEquivalent);
    assert!(rep.loglik_b > rep.loglik_a);
}

#[test]
fn unconverged_fit_is_inconclusive() {
    let d = ri_data(4, 300, 84);
    let spec = build_spec(ModelKind::RiClpm, 4, ConstraintProfile::time_invariant()).unwrap();
    let good = fit(&spec, &d, &FitOptions::default()).unwrap();
    let bad = fit(&spec, &d, &FitOptions { max_iterations: 1, multistart: 1, ..Default::default() }).unwrap();
    assert!(!bad.converged);
    assert_eq!(compare_fits(&good, &bad, Tolerances::default()).verdict, Verdict::Inconclusive);
}

#[test]
fn menu_rows_sort_by_information_criteria() {
    let d = ri_data(5, 1_000, 85);
    let specs = comparison_menu(5).unwrap();
    let mut table = compare_menu(&d, &specs, &FitOptions::default(), Execution::default());
    assert_eq!(table.rows.len(), specs.len());
    for (row, spec) in table.rows.iter().zip(&specs) {
        assert_eq!(row.df, degrees_of_freedom(spec));
        assert_eq!(row.free_parameters, spec.free_count);
        assert_eq!(row.label, spec.label());
    }
    let aic = |t: &ComparisonTable, kind: ModelKind| {
        t.rows
            .iter()
            .filter(|r| r.model.kind == kind)
            .filter_map(|r| r.indices.as_ref())
            .map(|i| i.aic)
            .fold(f64::INFINITY, f64::min)
    };
    assert!(aic(&table, ModelKind::RiClpm) < aic(&table, ModelKind::Clpm));

    table.sort_by(SortKey::Aic);
    let ranked: Vec<f64> = table.rows.iter().filter_map(|r| r.indices.as_ref()).map(|i| i.aic).collect();
    assert!(ranked.windows(2).all(|w| w[0] <= w[1]));
    for r in table.rows.iter().filter(|r| r.indices.is_some()) {
        let i = r.indices.as_ref().unwrap();
        let expected = -2.0 * i.loglik + 2.0 * r.free_parameters as f64;
        assert!((i.aic - expected).abs() < 1e-9 * expected.abs().max(1.0));
    }
    // rows without indices sink to the bottom
    let first_missing = table.rows.iter().position(|r| r.indices.is_none()).unwrap_or(table.rows.len());
    assert!(table.rows[first_missing..].iter().all(|r| r.indices.is_none()));
}

#[test]
fn sequential_and_parallel_menus_agree() {
    let d = ri_data(4, 400, 86);
    let specs = comparison_menu(4).unwrap();
    let opts = FitOptions { execution: Execution::Sequential, ..FitOptions::default() };
    let a = compare_menu(&d, &specs, &opts, Execution::Sequential);
    let b = compare_menu(&d, &specs, &opts, Execution::Parallel);
    assert_eq!(a, b);
}

#[test]
fn comparison_table_round_trips_through_toml() {
    let d = ri_data(4, 300, 87);
    let specs = comparison_menu(4).unwrap();
    let table = compare_menu(&d, &specs, &FitOptions::default(), Execution::default());
    let back: ComparisonTable = toml::from_str(&table.to_toml()).unwrap();
    assert_eq!(back.rows.len(), table.rows.len());
    for (a, b) in back.rows.iter().zip(&table.rows) {
        assert_eq!(a.label, b.label);
        assert_eq!(a.model, b.model);
        assert_eq!(a.df, b.df);
    }
    let text = table.to_text();
    for r in &table.rows {
        assert!(text.contains(&r.label), "{} missing", r.label);
    }
}
