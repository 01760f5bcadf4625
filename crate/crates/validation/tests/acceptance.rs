//! Acceptance suite: one PASS/FAIL line per criterion. Criteria on real
//! datasets read their CSVs from `$EPIGATE_DATA_DIR`.

use std::time::Instant;

use ndarray::Axis;

use epigate_core::attribution::AttributionMethod;
use epigate_core::data::{gaussian_blobs, TabularDataset};
use epigate_core::experiments::{
    run_correlation_study, run_feature_removal, run_mixed_noise_gating, run_signal_mass, run_stratified_validation,
    CommonConfig, CorrelationConfig, GatingResult, MixedNoiseConfig, ModelKind, RemovalConfig, SignalMassConfig,
    StratifiedConfig,
};
use epigate_core::models::{f1_score, Classifier};
use epigate_core::oracle::{self, ForestSuite, OracleCheck};
use epigate_core::perturbation::{bim_attack, cw_attack, pgd_attack, AttackConfig, PerturbationKind};
use epigate_validation::{dataset, ensure, run_criterion, within, Check};

const SEED: u64 = 0;

fn oracle_ok(c: &OracleCheck) -> Result<String, String> {
    if c.passed {
        Ok(format!("{} max {:.2e}", c.name, c.max_error))
    } else {
        Err(c.summary_line())
    }
}

fn rf_tree_shap(ds: &TabularDataset) -> CommonConfig {
    CommonConfig::new(ds.schema.name.clone(), ModelKind::Rf, AttributionMethod::TreeShap, SEED)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let suite = ForestSuite {
        seed: SEED,
        ..Default::default()
    };
    let tree = oracle::check_tree_shap(&suite);
    let kernel = oracle::check_kernel_shap_full(&suite);
    let elapsed = start.elapsed().as_secs_f64();
    let a = oracle_ok(&tree)?;
    let b = oracle_ok(&kernel)?;
    ensure(elapsed < 120.0, || format!("took {elapsed:.0}s, budget 120s"))?;
    Ok(format!("{a}; {b}"))
}

fn criterion_2() -> Check {
    let checks = [
        oracle::check_mlp_parameter_gradient(20, SEED),
        oracle::check_mlp_input_gradient(5, SEED),
        oracle::check_ig_completeness(20, SEED),
        oracle::check_ig_linear(20, SEED),
    ];
    ensure(checks[0].trials >= 20 && checks[1].trials >= 20, || "fewer than 20 coordinates".into())?;
    let parts = checks.iter().map(oracle_ok).collect::<Result<Vec<_>, _>>()?;
    Ok(parts.join("; "))
}

fn criterion_3() -> Check {
    let rank = oracle::check_rank_correlations(200, SEED);
    let xec = oracle::check_xec_invariance(50, SEED);
    Ok(format!("{}; {}", oracle_ok(&rank)?, oracle_ok(&xec)?))
}

fn test_f1(ds: &TabularDataset, model: ModelKind) -> Result<f64, String> {
    let common = CommonConfig::new(ds.schema.name.clone(), model, AttributionMethod::KernelShap, SEED);
    let p = common.prepare(ds).map_err(|e| e.to_string())?;
    let test = &p.splits.test;
    let pred = p.model.predictor().predict(test.features.view()).map_err(|e| e.to_string())?;
    Ok(f1_score(&test.labels, &pred, ds.n_classes()))
}

fn criterion_4() -> Check {
    let targets = [
        ("wine", ModelKind::Lr, 0.736, 0.05),
        ("wine", ModelKind::Rf, 0.810, 0.05),
        ("wine", ModelKind::Mlp, 0.764, 0.06),
        ("rice", ModelKind::Rf, 0.919, 0.05),
        ("rice", ModelKind::Mlp, 0.930, 0.06),
    ];
    let mut parts = Vec::new();
    let mut failed = false;
    for (name, model, target, tol) in targets {
        let ds = dataset(name)?;
        let f1 = test_f1(&ds, model)?;
        let ok = within(f1, target, tol);
        failed |= !ok;
        parts.push(format!("{name} {} F1 {f1:.3} (target {target} ± {tol}){}", model.as_str(), if ok { "" } else { " OUT" }));
    }
    let detail = parts.join("; ");
    if failed {
        Err(detail)
    } else {
        Ok(detail)
    }
}

fn criterion_5() -> Check {
    let mut parts = Vec::new();
    let mut hits = 0;
    let mut errors = Vec::new();
    for name in ["wine", "bean", "rice"] {
        let ds = match dataset(name) {
            Ok(d) => d,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let start = Instant::now();
        let cfg = CorrelationConfig::new(rf_tree_shap(&ds)).only(PerturbationKind::Gaussian);
        let r = run_correlation_study(&ds, &cfg).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let x = r.cells[0].xec;
        let ok = x.is_some_and(|v| v < -0.6) && secs < 1800.0;
        hits += ok as usize;
        parts.push(format!("{name} XEC {} in {secs:.0}s", x.map(|v| format!("{v:.3}")).unwrap_or("undefined".into())));
    }
    parts.extend(errors);
    let detail = format!("{hits}/3 below -0.6: {}", parts.join("; "));
    if hits >= 2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Check {
    let mut parts = Vec::new();
    for name in ["bean", "rice"] {
        let ds = dataset(name)?;
        let cfg = StratifiedConfig::new(rf_tree_shap(&ds));
        let r = run_stratified_validation(&ds, &cfg).map_err(|e| e.to_string())?;
        for &sigma in &cfg.sigmas {
            let m = |s: &str| r.summary(sigma, s).map(|x| x.mean).unwrap_or(f64::NAN);
            let (lo, med, hi) = (m("low"), m("medium"), m("high"));
            ensure(lo > med && med > hi, || {
                format!("{name} sigma {sigma}: low {lo:.3} medium {med:.3} high {hi:.3} not ordered")
            })?;
            if sigma == 0.1 {
                ensure(lo - hi >= 0.05, || format!("{name} sigma 0.1: gap {:.3} < 0.05", lo - hi))?;
            }
            parts.push(format!("{name} σ={sigma} {lo:.3}>{med:.3}>{hi:.3}"));
        }
    }
    Ok(parts.join("; "))
}

fn gating(name: &str) -> Result<GatingResult, String> {
    let ds = dataset(name)?;
    run_mixed_noise_gating(&ds, &MixedNoiseConfig::new(rf_tree_shap(&ds))).map_err(|e| e.to_string())
}

fn pr_at(r: &GatingResult, nu: f64) -> (f64, f64) {
    let row = r.precision_recall.iter().find(|p| p.nu == nu).expect("rate present");
    (row.precision.unwrap_or(f64::NAN), row.recall.unwrap_or(f64::NAN))
}

fn criterion_7(bean: &Result<GatingResult, String>, rice: &Result<GatingResult, String>) -> Check {
    let bean = bean.as_ref().map_err(Clone::clone)?;
    let rice = rice.as_ref().map_err(Clone::clone)?;
    let (bp, br) = pr_at(bean, 0.5);
    let (rp, rr) = pr_at(rice, 0.5);
    let detail = format!(
        "bean ν=0.5 precision {bp:.3} (≥0.95) recall {br:.3} (0.614 ± 0.10); rice precision {rp:.3} (≥0.95) recall {rr:.3}"
    );
    ensure(bp >= 0.95 && within(br, 0.614, 0.10) && rp >= 0.95, || detail.clone())?;
    Ok(detail)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Relative cost recomputed from the audited evaluation counts.
fn audit_q(r: &GatingResult, expected: &[f64]) -> Result<String, String> {
    let cm = r.cost_model;
    let overhead = if cm.native_ensemble { 1.0 } else { cm.m };
    let mut got = Vec::new();
    for (row, &want) in r.cost.iter().zip(expected) {
        let q = if row.nu == 0.0 { 1.0 } else { overhead / cm.d_evals + (1.0 - row.nu) };
        ensure(q == row.q, || format!("{} ν={}: reported q {} differs from audited {q}", r.model, row.nu, row.q))?;
        ensure(round2(q) == want, || format!("{} ν={}: q {q:.4} is not {want:.2}", r.model, row.nu))?;
        got.push(format!("{:.2}", q));
    }
    Ok(format!("{}+{} d={} q [{}]", r.model, r.method, cm.d_evals, got.join(", ")))
}

fn criterion_8(rice: &Result<GatingResult, String>) -> Check {
    // audited cost on a small synthetic population, native and MC-dropout
    let blobs = gaussian_blobs(600, 6, 2, 1.5, SEED).map_err(|e| e.to_string())?;
    let small = |model, method| {
        let mut cfg = MixedNoiseConfig::new(CommonConfig::new("blobs", model, method, SEED));
        cfg.n_samples = 10;
        cfg.sigmas = vec![0.1];
        cfg.versions = 1;
        run_mixed_noise_gating(&blobs, &cfg).map_err(|e| e.to_string())
    };
    let rf = small(ModelKind::Rf, AttributionMethod::TreeShap)?;
    ensure(rf.explain_evals_per_sample == 100.0 * 100.0, || {
        format!("tree Shapley evals {} != trees × background", rf.explain_evals_per_sample)
    })?;
    let native = audit_q(&rf, &[0.30, 0.50, 0.70, 1.00])?;
    let mlp = small(ModelKind::Mlp, AttributionMethod::Lime)?;
    ensure(mlp.cost_model.m / mlp.cost_model.d_evals == 0.01, || {
        format!("MLP+LIME m/d = {} / {}", mlp.cost_model.m, mlp.cost_model.d_evals)
    })?;
    let dropout = audit_q(&mlp, &[0.31, 0.51, 0.71, 1.00])?;

    let rice = rice.as_ref().map_err(|e| format!("{native}; {dropout}; {e}"))?;
    let tau = |nu: f64| rice.cost.iter().find(|c| c.nu == nu).map(|c| c.mean_tau).unwrap_or(f64::NAN);
    let (t0, t5) = (tau(0.0), tau(0.5));
    let rice_q = audit_q(rice, &[0.30, 0.50, 0.70, 1.00])?;
    let detail = format!("{native}; {dropout}; {rice_q}; rice τ ν=0 {t0:.3} ν=0.5 {t5:.3} (0.965 ± 0.05)");
    ensure(within(t5, 0.965, 0.05) && t5 > t0, || detail.clone())?;
    Ok(detail)
}

fn criterion_9() -> Check {
    let bean = dataset("bean")?;
    let removal = run_feature_removal(&bean, &RemovalConfig::new(rf_tree_shap(&bean))).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for k in 1..=5 {
        let lo = removal.row("low", k).map(|r| r.mean_shift).unwrap_or(f64::NAN);
        let hi = removal.row("high", k).map(|r| r.mean_shift).unwrap_or(f64::NAN);
        ensure(lo > hi, || format!("bean k={k}: low {lo:.4} not above high {hi:.4}"))?;
        parts.push(format!("k={k} {lo:.3}>{hi:.3}"));
    }
    let mut passing = 0;
    let mut notes = Vec::new();
    for name in ["wine", "bean", "rice"] {
        let ds = match dataset(name) {
            Ok(d) => d,
            Err(e) => {
                notes.push(e);
                continue;
            }
        };
        let cfg = SignalMassConfig::new(rf_tree_shap(&ds));
        let r = run_signal_mass(&ds, &cfg).map_err(|e| e.to_string())?;
        let ok = cfg.ratios.iter().all(|&ratio| {
            let lo = r.row(ratio, "low").map(|x| x.mean).unwrap_or(f64::NAN);
            let hi = r.row(ratio, "high").map(|x| x.mean).unwrap_or(f64::NAN);
            lo > hi
        });
        passing += ok as usize;
        notes.push(format!("{name} signal mass low>high at every ratio: {ok}"));
    }
    let detail = format!("removal {}; {}", parts.join(" "), notes.join("; "));
    ensure(passing >= 2, || detail.clone())?;
    Ok(detail)
}

fn criterion_10() -> Check {
    let cfg = AttackConfig::default();
    let (net, points) = oracle::trained_mlp(SEED).map_err(|e| e.to_string())?;
    let mut n = 0;
    for eps in [0.01, 0.05, 0.1, 0.2] {
        ensure(cfg.bim.step(eps) == 0.25 * eps, || format!("BIM step {} at ε {eps}", cfg.bim.step(eps)))?;
        ensure(cfg.pgd.step(eps) == 0.125 * eps, || format!("PGD step {} at ε {eps}", cfg.pgd.step(eps)))?;
        for (i, x) in points.rows().into_iter().enumerate() {
            let y = net.predict(x.insert_axis(Axis(0))).map_err(|e| e.to_string())?[0];
            let bim = bim_attack(&net, x, y, eps, &cfg).map_err(|e| e.to_string())?;
            let pgd = pgd_attack(&net, x, y, eps, &cfg, i as u64).map_err(|e| e.to_string())?;
            for adv in [bim, pgd] {
                let linf = adv.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                ensure(linf <= eps, || format!("‖x̃ − x‖∞ = {linf} > ε = {eps}"))?;
                n += 1;
            }
        }
    }
    for x in points.rows() {
        let y = net.predict(x.insert_axis(Axis(0))).map_err(|e| e.to_string())?[0];
        let cw = cw_attack(&net, x, y, 0.0, &cfg.cw).map_err(|e| e.to_string())?;
        ensure(cw.adversarial == x, || "C&W with c = 0 changed the input".into())?;
    }
    Ok(format!("{n} BIM/PGD outputs inside the ε-ball; steps 0.25ε and 0.125ε; C&W c=0 is the identity"))
}

fn main() {
    println!("acceptance suite (data directory from EPIGATE_DATA_DIR, default ./data)");
    let mut outcomes = vec![
        run_criterion(1, "tree and kernel Shapley equal the enumeration oracle", criterion_1),
        run_criterion(2, "gradients match finite differences; IG completeness", criterion_2),
        run_criterion(3, "rank correlations and XEC invariance", criterion_3),
        run_criterion(4, "model quality on Wine and Rice", criterion_4),
        run_criterion(5, "XEC below -0.6 under Gaussian noise", criterion_5),
        run_criterion(6, "stratified stability ordering", criterion_6),
    ];
    let bean = gating("bean");
    let rice = gating("rice");
    outcomes.push(run_criterion(7, "gating precision and recall", || criterion_7(&bean, &rice)));
    outcomes.push(run_criterion(8, "relative cost and accepted-set stability", || criterion_8(&rice)));
    outcomes.push(run_criterion(9, "faithfulness by uncertainty group", criterion_9));
    outcomes.push(run_criterion(10, "attack contracts", criterion_10));
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
