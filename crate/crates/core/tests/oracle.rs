use epigate_core::attribution::tree_shap;
use epigate_core::oracle::*;

#[test]
fn default_suites_pass() {
    let report = run_all(0);
    for c in &report.checks {
        println!("{}", c.summary_line());
    }
    assert!(report.all_passed());
}

#[test]
fn corrupted_tree_shap_is_caught() {
    let suite = ForestSuite {
        trials: 10,
        ..Default::default()
    };
    let check = check_forest_explainer("corrupted", &suite, 1e-9, |c| {
        let mut a = tree_shap(&c.forest, c.x.view(), &c.background, c.target)?;
        a.values[0] += 1e-3;
        Ok(a)
    });
    assert!(!check.passed);
    assert!((check.max_error - 1e-3).abs() < 1e-6, "{}", check.max_error);
    assert!(check.summary_line().starts_with("FAIL"));
}

#[test]
fn closed_forms_by_hand() {
    let a = [1.0, 2.0, 3.0];
    assert_eq!(tau_closed_form(&a, &[3.0, 2.0, 1.0]), -1.0);
    assert_eq!(rho_closed_form(&a, &a), 1.0);
    // one swapped pair of three: d² = 2, ρ = 1 − 12/24
    assert_eq!(rho_closed_form(&a, &[2.0, 1.0, 3.0]), 0.5);
}

#[test]
fn forest_cases_respect_bounds() {
    let suite = ForestSuite::default();
    for t in 0..20 {
        let c = forest_case(&suite, t);
        assert!(c.forest.n_features <= 10 && c.forest.n_trees() <= 5);
        assert!(c.forest.trees.iter().all(|tr| tr.depth() <= 3));
        assert!(c.background.len() <= 20);
    }
}
