use epigate_core::attribution::AttributionMethod;
use epigate_core::data::{gaussian_blobs, TabularDataset};
use epigate_core::experiments::*;
use epigate_core::perturbation::PerturbationKind;

fn data() -> TabularDataset {
    gaussian_blobs(600, 4, 2, 1.5, 3).unwrap()
}

fn common(model: ModelKind, method: AttributionMethod) -> CommonConfig {
    let mut c = CommonConfig::new("blobs", model, method, 7);
    c.training.forest.n_trees = 15;
    c.training.forest.tree.max_depth = 5;
    c.background_size = 20;
    c
}

#[test]
fn correlation_study_runs_and_is_deterministic() {
    let ds = data();
    let mut cfg = CorrelationConfig::new(common(ModelKind::Rf, AttributionMethod::TreeShap)).only(PerturbationKind::Gaussian);
    cfg.n_samples = 20;
    let a = run_correlation_study(&ds, &cfg).unwrap();
    let b = run_correlation_study(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 1);
    let cell = &a.cells[0];
    assert!(cell.error.is_none(), "{:?}", cell.error);
    assert_eq!(cell.curve.as_ref().unwrap().levels.len(), 7);
    assert!(cell.xec.is_some());
}

#[test]
fn stratified_strata_are_balanced() {
    let ds = data();
    let mut cfg = StratifiedConfig::new(common(ModelKind::Rf, AttributionMethod::TreeShap));
    cfg.per_stratum = 8;
    cfg.n_seeds = 2;
    cfg.sigmas = vec![0.1];
    let r = run_stratified_validation(&ds, &cfg).unwrap();
    for name in STRATUM_NAMES {
        let s = r.summary(0.1, name).unwrap();
        assert_eq!(s.n + s.n_excluded, 8);
    }
    assert!(r.bin_edges[0] <= r.bin_edges[1]);
}

#[test]
fn mixed_noise_gating_tables() {
    let ds = data();
    let mut cfg = MixedNoiseConfig::new(common(ModelKind::Rf, AttributionMethod::TreeShap));
    cfg.n_samples = 20;
    cfg.versions = 2;
    cfg.sigmas = vec![0.1, 0.5];
    let r = run_mixed_noise_gating(&ds, &cfg).unwrap();
    assert_eq!(r.records.len() + r.n_excluded, 40);
    assert_eq!(r.precision_recall.len(), 5);
    let baseline = r.cost.iter().find(|c| c.nu == 0.0).unwrap();
    assert_eq!(baseline.q, 1.0);
    assert_eq!(baseline.n_accepted, r.records.len());
    let all: Vec<f64> = r.records.iter().map(|p| p.tau).collect();
    let m = all.iter().sum::<f64>() / all.len() as f64;
    assert!((baseline.mean_tau - m).abs() < 1e-12);
    assert!(r.cost_model.native_ensemble);

    let dir = tempfile::tempdir().unwrap();
    let report = ExperimentReport::new("gating", &cfg, &ds, StudyResult::Gating(r)).unwrap();
    report.write(dir.path()).unwrap();
    for f in ["report.json", "tab3_pr.csv", "tab4_cost.csv", "figB_scatter.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn removal_zero_k_has_zero_shift() {
    let ds = data();
    let mut cfg = RemovalConfig::new(common(ModelKind::Rf, AttributionMethod::TreeShap));
    cfg.group_size = 10;
    cfg.max_k = 3;
    let r = run_feature_removal(&ds, &cfg).unwrap();
    assert_eq!(r.rows.len(), 3 * 4);
    for g in ["low", "high", "random"] {
        assert_eq!(r.row(g, 0).unwrap().mean_shift, 0.0);
    }
    let low = r.group_epistemic.iter().find(|g| g.0 == "low").unwrap().1;
    let high = r.group_epistemic.iter().find(|g| g.0 == "high").unwrap().1;
    assert!(low <= high);
}

#[test]
fn signal_mass_rows_per_ratio_and_group() {
    let ds = data();
    let mut cfg = SignalMassConfig::new(common(ModelKind::Rf, AttributionMethod::TreeShap));
    cfg.ratios = vec![1, 2];
    cfg.group_size = 8;
    let r = run_signal_mass(&ds, &cfg).unwrap();
    assert_eq!(r.n_signal, 4);
    assert_eq!(r.rows.len(), 6);
    for row in &r.rows {
        assert!(row.mean >= 0.0 && row.mean <= 1.0);
    }
}

#[test]
fn input_hash_tracks_config_and_data() {
    let ds = data();
    let a = common(ModelKind::Lr, AttributionMethod::KernelShap);
    let mut b = a.clone();
    b.seed = 8;
    let va = serde_json::to_value(&a).unwrap();
    let vb = serde_json::to_value(&b).unwrap();
    assert_eq!(input_hash(&va, &ds).unwrap(), input_hash(&va, &ds).unwrap());
    assert_ne!(input_hash(&va, &ds).unwrap(), input_hash(&vb, &ds).unwrap());
}
