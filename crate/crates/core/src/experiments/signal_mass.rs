//! Signal mass: how much attribution stays on genuine features once pure
//! noise columns are appended to the data.

use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    epistemic, explain_rows, extreme_groups, mean, prepare_standardized, select_rows, std, targets, CommonConfig,
    ModelKind, GROUP_NAMES,
};
use crate::data::{fit_standardizer, split, Splits, Standardizer, TabularDataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMassConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    /// Noise-to-signal feature ratios.
    pub ratios: Vec<usize>,
    pub group_size: usize,
}

impl SignalMassConfig {
    /// Ratios 1..10 for random forests, 1..3 otherwise.
    pub fn new(common: CommonConfig) -> Self {
        let max = if common.model == ModelKind::Rf { 10 } else { 3 };
        Self {
            common,
            ratios: (1..=max).collect(),
            group_size: 50,
        }
    }
}

/// Fraction of total |φ| on the first `n_signal` features; `None` when the
/// total is zero.
pub fn signal_mass(values: &[f64], n_signal: usize) -> Option<f64> {
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    if total == 0.0 || !total.is_finite() {
        return None;
    }
    Some(values.iter().take(n_signal).map(|v| v.abs()).sum::<f64>() / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMassRow {
    pub ratio: usize,
    pub group: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// Samples with zero total attribution or a failed explanation.
    pub n_flagged: usize,
    pub mean_epistemic: f64,
    pub model_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMassResult {
    pub n_signal: usize,
    pub rows: Vec<SignalMassRow>,
}

impl SignalMassResult {
    pub fn row(&self, ratio: usize, group: &str) -> Option<&SignalMassRow> {
        self.rows.iter().find(|r| r.ratio == ratio && r.group == group)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["ratio", "group", "mean", "std", "n", "n_flagged", "mean_epistemic", "model_evals"])?;
        for r in &self.rows {
            w.write_record([
                r.ratio.to_string(),
                r.group.clone(),
                r.mean.to_string(),
                r.std.to_string(),
                r.n.to_string(),
                r.n_flagged.to_string(),
                r.mean_epistemic.to_string(),
                r.model_evals.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Append `n_noise` standard-normal columns to a standardized dataset.
fn augment(ds: &TabularDataset, n_noise: usize, seed: u64) -> Result<TabularDataset> {
    let mut r = rng::rng(seed);
    let noise = Array2::from_shape_simple_fn((ds.len(), n_noise), || StandardNormal.sample(&mut r));
    let features = concatenate(Axis(1), &[ds.features.view(), noise.view()])
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut schema = ds.schema.clone();
    schema.feature_names.extend((0..n_noise).map(|i| format!("noise{i}")));
    TabularDataset::new(features, ds.labels.clone(), schema)
}

/// For every ratio r, append r·d noise columns, retrain, and compare the
/// signal mass of the low, high and random epistemic groups of the test
/// split.
pub fn run_signal_mass(dataset: &TabularDataset, config: &SignalMassConfig) -> Result<SignalMassResult> {
    let common = &config.common;
    let raw = split(dataset, &common.split)?;
    let base = fit_standardizer(&raw.train)?;
    let d = dataset.n_features();
    let explainer = common.explainer();
    let mut rows = Vec::new();
    for &ratio in &config.ratios {
        let n_noise = ratio * d;
        let seed = rng::substream_seed(common.seed, &[50, ratio as u64]);
        let parts = [&raw.train, &raw.val, &raw.test]
            .iter()
            .enumerate()
            .map(|(p, ds)| augment(&base.apply_dataset(ds)?, n_noise, rng::substream_seed(seed, &[p as u64])))
            .collect::<Result<Vec<_>>>()?;
        let [train, val, test]: [TabularDataset; 3] = parts.try_into().expect("three parts");
        let mut standardizer: Standardizer = base.clone();
        standardizer.means.extend(std::iter::repeat_n(0.0, n_noise));
        standardizer.stds.extend(std::iter::repeat_n(1.0, n_noise));
        let splits = Splits {
            train,
            val,
            test,
            indices: raw.indices.clone(),
        };
        let prepared = prepare_standardized(
            splits,
            standardizer,
            common.model,
            &common.training,
            common.background_size,
            seed,
        )?;
        let test = &prepared.splits.test;
        let scores = epistemic(&prepared, test.features.view(), common.reduction, rng::substream_seed(seed, &[3]))?;
        let groups = extreme_groups(&scores, config.group_size, rng::substream_seed(seed, &[4]))?;
        for (name, members) in GROUP_NAMES.iter().zip(&groups) {
            let x = select_rows(&test.features, members);
            let tgt = targets(&prepared, x.view())?;
            let mut masses = Vec::new();
            let mut n_flagged = 0;
            let mut model_evals = 0;
            for a in explain_rows(&explainer, &prepared, x.view(), &tgt, rng::substream_seed(seed, &[5])) {
                match a.ok().and_then(|a| {
                    model_evals += a.model_evals as u64;
                    signal_mass(&a.values, d)
                }) {
                    Some(m) => masses.push(m),
                    None => n_flagged += 1,
                }
            }
            let u: Vec<f64> = members.iter().map(|&i| scores[i]).collect();
            rows.push(SignalMassRow {
                ratio,
                group: name.to_string(),
                mean: if masses.is_empty() { f64::NAN } else { mean(&masses) },
                std: if masses.is_empty() { f64::NAN } else { std(&masses) },
                n: masses.len(),
                n_flagged,
                mean_epistemic: mean(&u),
                model_evals,
            });
        }
    }
    Ok(SignalMassResult { n_signal: d, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_edge_cases() {
        assert_eq!(signal_mass(&[1.0, -2.0, 0.0, 0.0], 2), Some(1.0));
        assert!((signal_mass(&[1.0; 8], 2).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(signal_mass(&[0.0; 3], 1), None);
    }
}
