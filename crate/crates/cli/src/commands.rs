use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use epigate_core::attribution::{explain, AttributionMethod, BackgroundSet, ExplainContext, ExplainerConfig, TrainStats};
use epigate_core::data::{
    builtin_schema, data_dir, load_dataset, load_from_dir, split, DatasetSchema, SplitSpec, Splits, TabularDataset,
};
use epigate_core::experiments::{
    cost_model_for, run_correlation_study, run_feature_removal, run_mixed_noise_gating, run_signal_mass,
    run_stratified_validation, CommonConfig, CorrelationConfig, ExperimentReport, GatingResult, MixedNoiseConfig,
    ModelKind, RemovalConfig, SignalMassConfig, StratifiedConfig, StudyResult, TrainingConfig,
};
use epigate_core::gating::{CostModel, GateMode, GateReport};
use epigate_core::models::{accuracy, f1_score, ModelFile};
use epigate_core::perturbation::PerturbationKind;
use epigate_core::uncertainty::{epistemic_summary, native_epistemic, ClassReduction};
use epigate_core::{oracle, rng, Error, Result};

use crate::manifest::Manifest;
use crate::*;

pub fn run(command: &Command) -> std::result::Result<u8, Failure> {
    match command {
        Command::Train(a) => train(a),
        Command::Explain(a) => explain_cmd(a),
        Command::Uncertainty(a) => uncertainty(a),
        Command::Gate(a) => gate(a),
        Command::Experiment(a) => experiment(a),
        Command::OracleCheck(a) => oracle_check(a),
    }
}

fn model_kind(m: ModelArg) -> ModelKind {
    match m {
        ModelArg::Lr => ModelKind::Lr,
        ModelArg::Rf => ModelKind::Rf,
        ModelArg::Mlp => ModelKind::Mlp,
    }
}

fn reduction(r: ReductionArg) -> ClassReduction {
    match r {
        ReductionArg::PredictedClass => ClassReduction::PredictedClass,
        ReductionArg::MeanOverClasses => ClassReduction::MeanOverClasses,
    }
}

fn method(s: &str) -> std::result::Result<AttributionMethod, Failure> {
    AttributionMethod::parse(s).ok_or_else(|| Failure::usage(format!("unknown attribution method '{s}'")))
}

fn seed(out: &OutArgs) -> u64 {
    out.seed.unwrap_or(0)
}

fn schema_for(data: &DataArgs, fallback: Option<&DatasetSchema>) -> std::result::Result<DatasetSchema, Failure> {
    if let Some(path) = &data.schema {
        let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(path.clone()))?;
        return Ok(DatasetSchema::from_toml(&text)?);
    }
    if let Some(name) = &data.dataset {
        return Ok(builtin_schema(name)?);
    }
    fallback
        .cloned()
        .ok_or_else(|| Failure::usage("give --dataset or --schema"))
}

fn load(data: &DataArgs, fallback: Option<&DatasetSchema>) -> std::result::Result<TabularDataset, Failure> {
    let schema = schema_for(data, fallback)?;
    let loaded = match &data.data {
        Some(path) => load_dataset(path, &schema)?,
        None => load_from_dir(&data_dir(), &schema)?,
    };
    if loaded.rejected_rows > 0 {
        eprintln!("note: {} malformed rows skipped", loaded.rejected_rows);
    }
    Ok(loaded.dataset)
}

/// Parse a TOML file into JSON and merge it over `base`.
fn merge_toml(base: Value, path: Option<&Path>) -> std::result::Result<Value, Failure> {
    let Some(path) = path else { return Ok(base) };
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let overlay: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let overlay = serde_json::to_value(overlay).map_err(Error::from)?;
    let mut base = base;
    merge(&mut base, overlay);
    Ok(base)
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn configured<T: Serialize + DeserializeOwned>(default: &T, path: Option<&Path>) -> std::result::Result<T, Failure> {
    let value = merge_toml(serde_json::to_value(default).map_err(Error::from)?, path)?;
    serde_json::from_value(value).map_err(|e| Failure::from(Error::Config(e.to_string())))
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Serialize, serde::Deserialize)]
struct TrainSettings {
    split: SplitSpec,
    #[serde(flatten)]
    training: TrainingConfig,
}

fn train(a: &TrainArgs) -> std::result::Result<u8, Failure> {
    let s = seed(&a.out);
    let settings = configured(
        &TrainSettings {
            split: SplitSpec::with_seed(s),
            training: TrainingConfig::default(),
        },
        a.config.as_deref(),
    )?;
    let ds = load(&a.data, None)?;
    let mut common = CommonConfig::new(ds.schema.name.clone(), model_kind(a.model), AttributionMethod::KernelShap, s);
    common.split = settings.split;
    common.training = settings.training;
    let prepared = common.prepare(&ds)?;
    let file = ModelFile {
        format_version: ModelFile::FORMAT_VERSION,
        schema: ds.schema.clone(),
        standardizer: prepared.standardizer.clone(),
        split: common.split,
        seed: s,
        model: prepared.model.clone(),
    };
    create(&a.out.out)?;
    file.save(&a.out.out.join("model.json"))?;
    let test = &prepared.splits.test;
    let pred = prepared.model.predictor().predict(test.features.view())?;
    let metrics = serde_json::json!({
        "model": common.model.as_str(),
        "dataset": ds.schema.name,
        "n_train": prepared.splits.train.len(),
        "n_val": prepared.splits.val.len(),
        "n_test": test.len(),
        "test_f1": f1_score(&test.labels, &pred, ds.n_classes()),
        "test_accuracy": accuracy(&test.labels, &pred),
    });
    std::fs::write(
        a.out.out.join("metrics.json"),
        serde_json::to_string_pretty(&metrics).map_err(Error::from)?,
    )
    .map_err(Error::from)?;
    println!("{metrics}");
    let config = serde_json::json!({ "split": common.split, "training": common.training });
    Manifest::new("train", s, config).write(&a.out.out)?;
    Ok(0)
}

/// Dataset splits reproduced from a model file, standardized with its
/// standardizer.
fn model_splits(data: &DataArgs, file: &ModelFile) -> std::result::Result<Splits, Failure> {
    let ds = load(data, Some(&file.schema))?;
    if ds.n_features() != file.standardizer.n_features() {
        return Err(Error::ColumnMismatch {
            expected: file.standardizer.n_features(),
            found: ds.n_features(),
        }
        .into());
    }
    let raw = split(&ds, &file.split)?;
    Ok(Splits {
        train: file.standardizer.apply_dataset(&raw.train)?,
        val: file.standardizer.apply_dataset(&raw.val)?,
        test: file.standardizer.apply_dataset(&raw.test)?,
        indices: raw.indices,
    })
}

fn explain_cmd(a: &ExplainArgs) -> std::result::Result<u8, Failure> {
    let s = seed(&a.out);
    let m = method(&a.method)?;
    let file = ModelFile::load(&a.model_file)?;
    let splits = model_splits(&a.data, &file)?;
    let background = BackgroundSet::sample(
        splits.train.features.view(),
        a.background,
        rng::substream_seed(s, &[2]),
    )?;
    let stats = TrainStats::from_data(splits.train.features.view());
    let ctx = ExplainContext {
        predictor: file.model.predictor(),
        forest: file.model.forest(),
        background: &background,
        train_stats: &stats,
    };
    let config = ExplainerConfig::new(m);
    let test = &splits.test;
    let n = a.limit.unwrap_or(test.len()).min(test.len());
    let targets = ctx.predictor.predict(test.features.view())?;
    let explain_seed = rng::substream_seed(s, &[11]);
    use rayon::prelude::*;
    let attrs: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            explain(
                &config,
                &ctx,
                test.features.row(i),
                targets[i],
                rng::substream_seed(explain_seed, &[i as u64]),
            )
        })
        .collect::<Result<_>>()?;

    create(&a.out.out)?;
    let mut w = csv::Writer::from_path(a.out.out.join("attributions.csv")).map_err(Error::from)?;
    let mut header = vec!["row".to_string(), "target".into(), "method".into(), "model_evals".into(), "stabilized".into()];
    header.extend(file.schema.feature_names.iter().map(|f| format!("phi_{f}")));
    w.write_record(&header).map_err(Error::from)?;
    for (i, att) in attrs.iter().enumerate() {
        let mut row = vec![
            splits.indices[2][i].to_string(),
            att.target_class.to_string(),
            att.method.as_str().to_string(),
            att.model_evals.to_string(),
            att.stabilized.to_string(),
        ];
        row.extend(att.values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    let total: usize = attrs.iter().map(|a| a.model_evals).sum();
    println!("explained {n} rows with {}, {total} model evaluations", m.as_str());
    let config = serde_json::json!({
        "model_file": a.model_file,
        "method": m.as_str(),
        "background": a.background,
        "limit": a.limit,
        "explainer": config,
    });
    Manifest::new("explain", s, config).write(&a.out.out)?;
    Ok(0)
}

fn uncertainty(a: &UncertaintyArgs) -> std::result::Result<u8, Failure> {
    let s = seed(&a.out);
    let file = ModelFile::load(&a.model_file)?;
    let splits = model_splits(&a.data, &file)?;
    let scores = native_epistemic(&file.model, splits.test.features.view(), reduction(a.reduction), s)?;
    create(&a.out.out)?;
    let f = std::fs::File::create(a.out.out.join("epistemic.csv")).map_err(Error::from)?;
    scores.write_csv(std::io::BufWriter::new(f))?;
    let summary = epistemic_summary(&scores.values)?;
    let out = serde_json::json!({
        "source": scores.source.as_str(),
        "reduction": scores.reduction,
        "n": scores.len(),
        "summary": summary,
    });
    std::fs::write(
        a.out.out.join("summary.json"),
        serde_json::to_string_pretty(&out).map_err(Error::from)?,
    )
    .map_err(Error::from)?;
    println!("{out}");
    let config = serde_json::json!({ "model_file": a.model_file, "reduction": scores.reduction });
    Manifest::new("uncertainty", s, config).write(&a.out.out)?;
    Ok(0)
}

fn gate(a: &GateArgs) -> std::result::Result<u8, Failure> {
    if !(0.0..=1.0).contains(&a.nu) {
        return Err(Failure::usage("--nu must lie in [0, 1]"));
    }
    let s = seed(&a.out);
    let file = ModelFile::load(&a.model_file)?;
    let splits = model_splits(&a.data, &file)?;
    let scores = native_epistemic(&file.model, splits.test.features.view(), reduction(a.reduction), s)?;
    let mode = match a.mode {
        ModeArg::Route => GateMode::Route,
        ModeArg::Defer => GateMode::Defer,
    };
    let cost = match a.explain_evals {
        Some(d) => {
            let mut common = CommonConfig::new("", ModelKind::Rf, AttributionMethod::TreeShap, s);
            common.model = ModelKind::parse(file.model.kind()).expect("known model kind");
            Some(cost_model_for(&common, d)?)
        }
        None => None,
    };
    let report = GateReport::build(&scores.values, a.nu, mode, None, cost)?;
    create(&a.out.out)?;
    report.write_json(&a.out.out.join("gate.json"))?;
    report.write_csv(&a.out.out.join("gate.csv"))?;
    println!(
        "threshold {} achieved rate {}{}",
        report.policy.threshold,
        report.achieved_rate,
        report.q.map(|q| format!(" q {q}")).unwrap_or_default()
    );
    let config = serde_json::json!({
        "model_file": a.model_file,
        "nu": a.nu,
        "mode": mode,
        "reduction": scores.reduction,
        "explain_evals": a.explain_evals,
    });
    Manifest::new("gate", s, config).write(&a.out.out)?;
    Ok(0)
}

fn study_name(n: StudyArg) -> &'static str {
    match n {
        StudyArg::Correlation => "correlation",
        StudyArg::Stratified => "stratified",
        StudyArg::Table3 => "table3",
        StudyArg::Table4 => "table4",
        StudyArg::Gating => "gating",
        StudyArg::Removal => "removal",
        StudyArg::SignalMass => "signal-mass",
    }
}

/// Default configuration, then the TOML overlay, then explicit flags.
fn study_config<T: Serialize + DeserializeOwned>(
    default: T,
    a: &ExperimentArgs,
    common_of: impl Fn(&mut T) -> &mut CommonConfig,
) -> std::result::Result<T, Failure> {
    let mut cfg = configured(&default, a.config.as_deref())?;
    let common = common_of(&mut cfg);
    if let Some(m) = a.model {
        common.model = model_kind(m);
    }
    if let Some(m) = &a.method {
        common.method = method(m)?;
    }
    if let Some(s) = a.out.seed {
        common.seed = s;
    }
    Ok(cfg)
}

fn experiment(a: &ExperimentArgs) -> std::result::Result<u8, Failure> {
    let ds = load(&a.data, None)?;
    let name = study_name(a.name);
    let base = CommonConfig::new(ds.schema.name.clone(), ModelKind::Rf, AttributionMethod::TreeShap, seed(&a.out));
    let out = &a.out.out;
    create(out)?;
    let seed_used;
    let config: Value = match a.name {
        StudyArg::Correlation => {
            let mut cfg = study_config(CorrelationConfig::new(base), a, |c| &mut c.common)?;
            if let Some(kinds) = &a.kinds {
                for k in kinds {
                    if PerturbationKind::parse(k).is_none() {
                        return Err(Failure::usage(format!("unknown perturbation kind '{k}'")));
                    }
                }
                cfg.levels.retain(|k, _| kinds.contains(k));
            }
            let r = run_correlation_study(&ds, &cfg)?;
            for c in &r.cells {
                println!(
                    "{} {} {}: XEC {}",
                    c.model,
                    c.method,
                    c.kind,
                    c.xec.map(|v| format!("{v:.3}")).unwrap_or_else(|| c.error.clone().unwrap_or("undefined".into()))
                );
            }
            ExperimentReport::new(name, &cfg, &ds, StudyResult::Correlation(r))?.write(out)?;
            seed_used = cfg.common.seed;
            serde_json::to_value(&cfg).map_err(Error::from)?
        }
        StudyArg::Stratified => {
            let cfg = study_config(StratifiedConfig::new(base), a, |c| &mut c.common)?;
            let r = run_stratified_validation(&ds, &cfg)?;
            for s in &r.summaries {
                println!("sigma {} {}: mean tau {:.3} (n {})", s.sigma, s.stratum, s.mean, s.n);
            }
            ExperimentReport::new(name, &cfg, &ds, StudyResult::Stratified(r))?.write(out)?;
            seed_used = cfg.common.seed;
            serde_json::to_value(&cfg).map_err(Error::from)?
        }
        StudyArg::Table3 | StudyArg::Gating => {
            let cfg = study_config(MixedNoiseConfig::new(base), a, |c| &mut c.common)?;
            let r = run_mixed_noise_gating(&ds, &cfg)?;
            print_gating(&r);
            ExperimentReport::new(name, &cfg, &ds, StudyResult::Gating(r))?.write(out)?;
            seed_used = cfg.common.seed;
            serde_json::to_value(&cfg).map_err(Error::from)?
        }
        StudyArg::Table4 => {
            let mut mlp = base.clone();
            mlp.model = ModelKind::Mlp;
            mlp.method = AttributionMethod::Lime;
            let mut configs = Vec::new();
            let mut results = Vec::new();
            for common in [base, mlp] {
                let mut cfg = configured(&MixedNoiseConfig::new(common), a.config.as_deref())?;
                if let Some(s) = a.out.seed {
                    cfg.common.seed = s;
                }
                let r = run_mixed_noise_gating(&ds, &cfg)?;
                print_gating(&r);
                let dir = out.join(format!("{}_{}", r.model, r.method));
                ExperimentReport::new(name, &cfg, &ds, StudyResult::Gating(r.clone()))?.write(&dir)?;
                configs.push(cfg);
                results.push(r);
            }
            write_combined_cost(&results, &out.join("tab4_cost.csv"))?;
            seed_used = configs[0].common.seed;
            serde_json::to_value(&configs).map_err(Error::from)?
        }
        StudyArg::Removal => {
            let cfg = study_config(RemovalConfig::new(base), a, |c| &mut c.common)?;
            let r = run_feature_removal(&ds, &cfg)?;
            for row in &r.rows {
                println!("{} k={}: log-odds MSE {:.4}", row.group, row.k, row.mean_shift);
            }
            ExperimentReport::new(name, &cfg, &ds, StudyResult::Removal(r))?.write(out)?;
            seed_used = cfg.common.seed;
            serde_json::to_value(&cfg).map_err(Error::from)?
        }
        StudyArg::SignalMass => {
            let mut cfg = study_config(SignalMassConfig::new(base), a, |c| &mut c.common)?;
            if a.model.is_some() && a.config.is_none() {
                cfg.ratios = SignalMassConfig::new(cfg.common.clone()).ratios;
            }
            let r = run_signal_mass(&ds, &cfg)?;
            for row in &r.rows {
                println!("ratio {} {}: signal mass {:.3}", row.ratio, row.group, row.mean);
            }
            ExperimentReport::new(name, &cfg, &ds, StudyResult::SignalMass(r))?.write(out)?;
            seed_used = cfg.common.seed;
            serde_json::to_value(&cfg).map_err(Error::from)?
        }
    };
    Manifest::new(&format!("experiment {name}"), seed_used, config).write(out)?;
    Ok(0)
}

fn print_gating(r: &GatingResult) {
    for p in &r.precision_recall {
        let f = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
        println!("{} {} nu {}: precision {} recall {}", r.model, r.method, p.nu, f(p.precision), f(p.recall));
    }
    for c in &r.cost {
        println!(
            "{} {} nu {}: accepted tau {:.3} ± {:.3}, q {:.2}",
            r.model, r.method, c.nu, c.mean_tau, c.std_tau, c.q
        );
    }
}

fn write_combined_cost(results: &[GatingResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "method", "nu", "mean_tau", "std_tau", "n_accepted", "q", "m", "d_evals", "native_ensemble"])?;
    for r in results {
        let CostModel {
            m,
            d_evals,
            native_ensemble,
        } = r.cost_model;
        for c in &r.cost {
            w.write_record([
                r.model.clone(),
                r.method.clone(),
                c.nu.to_string(),
                c.mean_tau.to_string(),
                c.std_tau.to_string(),
                c.n_accepted.to_string(),
                c.q.to_string(),
                m.to_string(),
                d_evals.to_string(),
                native_ensemble.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn oracle_check(a: &OracleArgs) -> std::result::Result<u8, Failure> {
    let report = oracle::run_all(a.seed);
    for c in &report.checks {
        println!("{}", c.summary_line());
    }
    if let Some(dir) = &a.out {
        create(dir)?;
        std::fs::write(
            dir.join("oracle.json"),
            serde_json::to_string_pretty(&report).map_err(Error::from)?,
        )
        .map_err(Error::from)?;
        Manifest::new("oracle-check", a.seed, serde_json::json!({ "seed": a.seed })).write(dir)?;
    }
    let failed = report.failures().count();
    if failed == 0 {
        println!("all {} oracle checks passed", report.checks.len());
        Ok(0)
    } else {
        println!("{failed} of {} oracle checks failed", report.checks.len());
        Ok(1)
    }
}
