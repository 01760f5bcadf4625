//! XD, EG and XEC across perturbation levels on a fixed test subset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{choose, epistemic, explain_rows, select_rows, targets, CommonConfig, Prepared};
use crate::data::TabularDataset;
use crate::error::Result;
use crate::perturbation::{perturb, split_std, PerturbContext, PerturbationKind, PerturbationSpec, gaussian_noise_scaled};
use crate::rng;
use crate::stability::{epistemic_growth, explanation_degradation, xec, SweepCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    /// Upper bound on the shared test subset.
    pub n_samples: usize,
    /// Perturbation seeds averaged per level.
    pub n_seeds: usize,
    /// Levels per perturbation kind.
    pub levels: BTreeMap<String, Vec<f64>>,
}

impl CorrelationConfig {
    /// All six perturbation kinds with their default level grids.
    pub fn new(common: CommonConfig) -> Self {
        let kinds = [
            PerturbationKind::Gaussian,
            PerturbationKind::Missing,
            PerturbationKind::Permute,
            PerturbationKind::Bim,
            PerturbationKind::Pgd,
            PerturbationKind::Cw,
        ];
        Self {
            common,
            n_samples: 100,
            n_seeds: 1,
            levels: kinds
                .iter()
                .map(|k| (k.as_str().to_string(), k.default_levels()))
                .collect(),
        }
    }

    pub fn only(mut self, kind: PerturbationKind) -> Self {
        self.levels.retain(|k, _| k == kind.as_str());
        self
    }
}

/// One (dataset, model, method, perturbation kind) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub dataset: String,
    pub model: String,
    pub method: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<SweepCurve>,
    /// `None` when XD or EG is constant or the cell failed.
    pub xec: Option<f64>,
    /// EG fell back to absolute means (clean uncertainty summed to zero).
    pub eg_absolute: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub model_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub n_samples: usize,
    pub cells: Vec<CorrelationCell>,
}

impl CorrelationResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dataset", "model", "method", "kind", "level", "xd", "eg", "excluded", "xec", "error"])?;
        for c in &self.cells {
            let xec = c.xec.map(|v| v.to_string()).unwrap_or_default();
            let err = c.error.clone().unwrap_or_default();
            match &c.curve {
                Some(curve) => {
                    for i in 0..curve.levels.len() {
                        w.write_record([
                            c.dataset.clone(),
                            c.model.clone(),
                            c.method.clone(),
                            c.kind.clone(),
                            curve.levels[i].to_string(),
                            curve.xd[i].to_string(),
                            curve.eg[i].to_string(),
                            curve.excluded.get(i).copied().unwrap_or(0).to_string(),
                            xec.clone(),
                            err.clone(),
                        ])?;
                    }
                }
                None => w.write_record([
                    c.dataset.clone(),
                    c.model.clone(),
                    c.method.clone(),
                    c.kind.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    xec,
                    err,
                ])?,
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Run every configured perturbation sweep on one fixed subset of
/// `min(n_samples, |test|)` test rows. Attribution targets are the clean
/// predicted classes; failures are recorded per cell.
pub fn run_correlation_study(dataset: &TabularDataset, config: &CorrelationConfig) -> Result<CorrelationResult> {
    let prepared = config.common.prepare(dataset)?;
    run_on_prepared(&prepared, config)
}

pub(crate) fn run_on_prepared(prepared: &Prepared, config: &CorrelationConfig) -> Result<CorrelationResult> {
    let common = &config.common;
    let test = &prepared.splits.test;
    let rows = choose(test.len(), config.n_samples, rng::substream_seed(common.seed, &[10]));
    let x = select_rows(&test.features, &rows);
    let test_std = split_std(test.features.view());
    let tgt = targets(prepared, x.view())?;
    let explainer = common.explainer();
    let explain_seed = rng::substream_seed(common.seed, &[11]);
    let uq_seed = rng::substream_seed(common.seed, &[12]);

    let clean_attr = explain_rows(&explainer, prepared, x.view(), &tgt, explain_seed);
    let clean_u = epistemic(prepared, x.view(), common.reduction, uq_seed)?;

    let mut cells = Vec::new();
    for (kind_name, levels) in &config.levels {
        let mut cell = CorrelationCell {
            dataset: common.dataset.clone(),
            model: common.model.as_str().to_string(),
            method: common.method.as_str().to_string(),
            kind: kind_name.clone(),
            curve: None,
            xec: None,
            eg_absolute: false,
            error: None,
            model_evals: 0,
        };
        let outcome = (|| -> Result<(SweepCurve, bool, usize)> {
            let kind = PerturbationKind::parse(kind_name)
                .ok_or_else(|| crate::Error::Config(format!("unknown perturbation kind '{kind_name}'")))?;
            let clean: Vec<Vec<f64>> = clean_attr
                .iter()
                .map(|r| r.as_ref().map(|a| a.values.clone()).unwrap_or_default())
                .collect();
            let mut evals: usize = clean_attr.iter().flatten().map(|a| a.model_evals).sum();
            let mut curve = SweepCurve {
                levels: levels.clone(),
                xd: Vec::new(),
                eg: Vec::new(),
                excluded: Vec::new(),
            };
            let mut absolute = false;
            for (li, &level) in levels.iter().enumerate() {
                let mut perturbed_attr: Vec<Vec<Option<Vec<f64>>>> = vec![Vec::new(); rows.len()];
                let mut clean_sum = Vec::new();
                let mut pert_sum = Vec::new();
                for s in 0..config.n_seeds {
                    let seed = rng::substream_seed(common.seed, &[13, li as u64, s as u64]);
                    let spec = PerturbationSpec::new(kind, level, seed);
                    let xp = if kind == PerturbationKind::Gaussian {
                        gaussian_noise_scaled(x.view(), level, &test_std, seed)
                    } else {
                        let ctx = PerturbContext {
                            model: Some(prepared.model.predictor()),
                            train_medians: Some(&prepared.train_medians),
                            labels: Some(&tgt),
                        };
                        perturb(&spec, x.view(), &ctx)?.data
                    };
                    for (i, a) in explain_rows(&explainer, prepared, xp.view(), &tgt, explain_seed)
                        .into_iter()
                        .enumerate()
                    {
                        if let Ok(a) = &a {
                            evals += a.model_evals;
                        }
                        perturbed_attr[i].push(a.ok().map(|a| a.values));
                    }
                    clean_sum.extend_from_slice(&clean_u);
                    pert_sum.extend(epistemic(prepared, xp.view(), common.reduction, uq_seed)?);
                }
                let deg = explanation_degradation(&clean, &perturbed_attr)?;
                let growth = epistemic_growth(&clean_sum, &pert_sum)?;
                absolute |= growth.absolute;
                curve.xd.push(deg.xd);
                curve.eg.push(growth.value);
                curve.excluded.push(deg.n_excluded);
            }
            Ok((curve, absolute, evals))
        })();
        match outcome {
            Ok((curve, absolute, evals)) => {
                cell.xec = xec(&curve).ok();
                cell.curve = Some(curve);
                cell.eg_absolute = absolute;
                cell.model_evals = evals;
            }
            Err(e) => cell.error = Some(e.to_string()),
        }
        cells.push(cell);
    }
    Ok(CorrelationResult {
        n_samples: rows.len(),
        cells,
    })
}
