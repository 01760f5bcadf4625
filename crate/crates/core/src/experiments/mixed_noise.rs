//! Gating on a pooled population of samples perturbed at mixed noise
//! levels: precision/recall of stable explanations and cost-benefit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{choose, epistemic, explain_rows, mean, select_rows, std, targets, CommonConfig, ModelKind};
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::gating::{calibrate_threshold, precision_recall, relative_cost, stability_label, CostModel, GateMode};
use crate::perturbation::{gaussian_noise_scaled, split_std};
use crate::rng;
use crate::stability::attribution_tau;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedNoiseConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub n_samples: usize,
    pub sigmas: Vec<f64>,
    /// Perturbed versions per sample and σ.
    pub versions: usize,
    /// Deferral rates for the precision/recall table.
    pub pr_rates: Vec<f64>,
    /// Deferral rates for the cost table; 0 is the ungated baseline.
    pub cost_rates: Vec<f64>,
}

impl MixedNoiseConfig {
    pub fn new(common: CommonConfig) -> Self {
        Self {
            common,
            n_samples: 500,
            sigmas: (1..=10).map(|k| 0.02 * k as f64).collect(),
            versions: 5,
            pr_rates: vec![0.9, 0.7, 0.5, 0.3, 0.1],
            cost_rates: vec![0.7, 0.5, 0.3, 0.0],
        }
    }
}

/// One sample at one σ, averaged over its perturbed versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledRecord {
    pub sigma: f64,
    pub sample: usize,
    pub epistemic: f64,
    pub tau: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrRow {
    pub nu: f64,
    pub threshold: f64,
    pub achieved_rate: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub n_accepted: usize,
    pub n_stable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub nu: f64,
    pub mean_tau: f64,
    pub std_tau: f64,
    pub n_accepted: usize,
    /// Relative cost; the ungated `ν = 0` baseline is 1 by definition.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingResult {
    pub model: String,
    pub method: String,
    pub records: Vec<PooledRecord>,
    pub precision_recall: Vec<PrRow>,
    pub cost: Vec<CostRow>,
    pub cost_model: CostModel,
    /// Mean explainer model evaluations per clean sample.
    pub explain_evals_per_sample: f64,
    /// Sample/σ pairs dropped because no version gave a valid τ.
    pub n_excluded: usize,
}

impl GatingResult {
    pub fn write_pr_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["model", "method", "nu", "threshold", "achieved_rate", "precision", "recall", "n_accepted", "n_stable"])?;
        for r in &self.precision_recall {
            w.write_record([
                self.model.clone(),
                self.method.clone(),
                r.nu.to_string(),
                r.threshold.to_string(),
                r.achieved_rate.to_string(),
                r.precision.map(|v| v.to_string()).unwrap_or_default(),
                r.recall.map(|v| v.to_string()).unwrap_or_default(),
                r.n_accepted.to_string(),
                r.n_stable.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_cost_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["model", "method", "nu", "mean_tau", "std_tau", "n_accepted", "q", "m", "d_evals", "native_ensemble"])?;
        for r in &self.cost {
            w.write_record([
                self.model.clone(),
                self.method.clone(),
                r.nu.to_string(),
                r.mean_tau.to_string(),
                r.std_tau.to_string(),
                r.n_accepted.to_string(),
                r.q.to_string(),
                self.cost_model.m.to_string(),
                self.cost_model.d_evals.to_string(),
                self.cost_model.native_ensemble.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Epistemic score against τ per pooled record, with the gate threshold
    /// of every precision/recall rate as extra columns.
    pub fn write_scatter_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["sigma".to_string(), "sample".into(), "epistemic".into(), "tau".into(), "stable".into()];
        header.extend(self.precision_recall.iter().map(|r| format!("threshold_nu_{}", r.nu)));
        w.write_record(&header)?;
        for rec in &self.records {
            let mut row = vec![
                rec.sigma.to_string(),
                rec.sample.to_string(),
                rec.epistemic.to_string(),
                rec.tau.to_string(),
                rec.stable.to_string(),
            ];
            row.extend(self.precision_recall.iter().map(|r| r.threshold.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cost model for a model family: a random forest's uncertainty is free,
/// MC dropout and the bootstrap ensemble cost one pass per member.
pub fn cost_model_for(common: &CommonConfig, explain_evals: f64) -> Result<CostModel> {
    let (m, native) = match common.model {
        ModelKind::Rf => (1.0, true),
        ModelKind::Mlp => (common.training.mlp.mc_samples as f64, false),
        ModelKind::Lr => (common.training.logistic.n_bootstrap as f64, false),
    };
    CostModel::new(m, explain_evals.max(1.0), native)
}

/// Build the pooled population, then evaluate the gate at every deferral
/// rate. Uncertainty is the model's native score on the perturbed inputs;
/// τ compares each perturbed attribution with the clean one.
pub fn run_mixed_noise_gating(dataset: &TabularDataset, config: &MixedNoiseConfig) -> Result<GatingResult> {
    let common = &config.common;
    let prepared = common.prepare(dataset)?;
    let test = &prepared.splits.test;
    let rows = choose(test.len(), config.n_samples, rng::substream_seed(common.seed, &[30]));
    let x = select_rows(&test.features, &rows);
    let test_std = split_std(test.features.view());
    let tgt = targets(&prepared, x.view())?;
    let explainer = common.explainer();
    let explain_seed = rng::substream_seed(common.seed, &[31]);
    let uq_seed = rng::substream_seed(common.seed, &[32]);

    let clean = explain_rows(&explainer, &prepared, x.view(), &tgt, explain_seed);
    let clean_evals: Vec<f64> = clean.iter().flatten().map(|a| a.model_evals as f64).collect();
    if clean_evals.is_empty() {
        return Err(Error::Undefined("every clean explanation failed"));
    }
    let explain_evals = mean(&clean_evals);

    let mut records = Vec::new();
    let mut n_excluded = 0;
    for (si, &sigma) in config.sigmas.iter().enumerate() {
        let mut u_sum = vec![0.0; rows.len()];
        let mut tau_sum = vec![(0.0, 0usize); rows.len()];
        for v in 0..config.versions {
            let seed = rng::substream_seed(common.seed, &[33, si as u64, v as u64]);
            let xp = gaussian_noise_scaled(x.view(), sigma, &test_std, seed);
            let u = epistemic(&prepared, xp.view(), common.reduction, uq_seed)?;
            for (i, a) in explain_rows(&explainer, &prepared, xp.view(), &tgt, explain_seed)
                .into_iter()
                .enumerate()
            {
                u_sum[i] += u[i];
                let (Ok(a), Ok(c)) = (a, &clean[i]) else { continue };
                if let Ok(t) = attribution_tau(&c.values, &a.values) {
                    tau_sum[i].0 += t;
                    tau_sum[i].1 += 1;
                }
            }
        }
        for i in 0..rows.len() {
            let (t, c) = tau_sum[i];
            if c == 0 {
                n_excluded += 1;
                continue;
            }
            let tau = t / c as f64;
            records.push(PooledRecord {
                sigma,
                sample: rows[i],
                epistemic: u_sum[i] / config.versions as f64,
                tau,
                stable: stability_label(tau),
            });
        }
    }
    if records.is_empty() {
        return Err(Error::Undefined("pooled population is empty"));
    }

    let scores: Vec<f64> = records.iter().map(|r| r.epistemic).collect();
    let stable: Vec<bool> = records.iter().map(|r| r.stable).collect();
    let taus: Vec<f64> = records.iter().map(|r| r.tau).collect();
    let mut pr_rows = Vec::new();
    for &nu in &config.pr_rates {
        let cal = calibrate_threshold(&scores, nu, GateMode::Defer)?;
        let accepted: Vec<bool> = cal.deferred.iter().map(|d| !d).collect();
        let pr = precision_recall(&accepted, &stable)?;
        pr_rows.push(PrRow {
            nu,
            threshold: cal.policy.threshold,
            achieved_rate: cal.achieved_rate(),
            precision: pr.precision,
            recall: pr.recall,
            n_accepted: pr.n_accepted,
            n_stable: pr.n_stable,
        });
    }

    let cost_model = cost_model_for(common, explain_evals)?;
    let mut cost_rows = Vec::new();
    for &nu in &config.cost_rates {
        let cal = calibrate_threshold(&scores, nu, GateMode::Defer)?;
        let kept: Vec<f64> = (0..taus.len()).filter(|&i| !cal.deferred[i]).map(|i| taus[i]).collect();
        let (mean_tau, std_tau) = if kept.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (mean(&kept), std(&kept))
        };
        cost_rows.push(CostRow {
            nu,
            mean_tau,
            std_tau,
            n_accepted: kept.len(),
            q: if nu == 0.0 { 1.0 } else { relative_cost(&cost_model, nu) },
        });
    }

    Ok(GatingResult {
        model: common.model.as_str().to_string(),
        method: common.method.as_str().to_string(),
        records,
        precision_recall: pr_rows,
        cost: cost_rows,
        cost_model,
        explain_evals_per_sample: explain_evals,
        n_excluded,
    })
}
