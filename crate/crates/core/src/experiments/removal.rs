//! Faithfulness check: remove the top-attributed features and measure how
//! far the prediction moves in log-odds space.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{epistemic, explain_rows, extreme_groups, mean, select_rows, std, targets, CommonConfig, GROUP_NAMES};
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::rng;

const CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub group_size: usize,
    pub max_k: usize,
}

impl RemovalConfig {
    pub fn new(common: CommonConfig) -> Self {
        Self {
            common,
            group_size: 50,
            max_k: 5,
        }
    }
}

/// Mean squared log-odds difference between two probability vectors,
/// averaged over classes. Probabilities are clipped to `[1e-6, 1 − 1e-6]`;
/// the flag reports whether clipping changed any value.
pub fn log_odds_shift(clean: &[f64], removed: &[f64]) -> Result<(f64, bool)> {
    if clean.len() != removed.len() || clean.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: clean.len(),
            found: removed.len(),
        });
    }
    let mut clipped = false;
    let mut logit = |p: f64| {
        let c = p.clamp(CLIP, 1.0 - CLIP);
        clipped |= c != p;
        (c / (1.0 - c)).ln()
    };
    let mut total = 0.0;
    for (&a, &b) in clean.iter().zip(removed) {
        total += (logit(a) - logit(b)).powi(2);
    }
    Ok((total / clean.len() as f64, clipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalRow {
    pub group: String,
    pub k: usize,
    pub mean_shift: f64,
    pub std_shift: f64,
    pub n: usize,
    /// Samples whose probabilities hit the clipping bound.
    pub n_clipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalResult {
    pub rows: Vec<RemovalRow>,
    /// Mean clean epistemic score of each group.
    pub group_epistemic: Vec<(String, f64)>,
    pub model_evals: u64,
    /// Samples skipped because their explanation failed.
    pub n_failed: usize,
}

impl RemovalResult {
    pub fn row(&self, group: &str, k: usize) -> Option<&RemovalRow> {
        self.rows.iter().find(|r| r.group == group && r.k == k)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["group", "k", "mean_shift", "std_shift", "n", "n_clipped"])?;
        for r in &self.rows {
            w.write_record([
                r.group.clone(),
                r.k.to_string(),
                r.mean_shift.to_string(),
                r.std_shift.to_string(),
                r.n.to_string(),
                r.n_clipped.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Group the test split by clean epistemic score, then for every k replace
/// each sample's k features of largest |φ| (ties by index) with the
/// training medians and record the log-odds shift.
pub fn run_feature_removal(dataset: &TabularDataset, config: &RemovalConfig) -> Result<RemovalResult> {
    let common = &config.common;
    let prepared = common.prepare(dataset)?;
    let test = &prepared.splits.test;
    let d = test.n_features();
    let scores = epistemic(&prepared, test.features.view(), common.reduction, rng::substream_seed(common.seed, &[40]))?;
    let groups = extreme_groups(&scores, config.group_size, rng::substream_seed(common.seed, &[41]))?;
    let explainer = common.explainer();
    let predictor = prepared.model.predictor();

    let mut rows = Vec::new();
    let mut group_epistemic = Vec::new();
    let mut model_evals = 0u64;
    let mut n_failed = 0;
    for (name, members) in GROUP_NAMES.iter().zip(&groups) {
        group_epistemic.push((name.to_string(), mean(&members.iter().map(|&i| scores[i]).collect::<Vec<_>>())));
        let x = select_rows(&test.features, members);
        let tgt = targets(&prepared, x.view())?;
        let attrs = explain_rows(&explainer, &prepared, x.view(), &tgt, rng::substream_seed(common.seed, &[42]));
        let mut kept = Vec::new();
        let mut rankings = Vec::new();
        for (i, a) in attrs.into_iter().enumerate() {
            match a {
                Ok(a) => {
                    model_evals += a.model_evals as u64;
                    rankings.push(top_features(&a.values));
                    kept.push(i);
                }
                Err(_) => n_failed += 1,
            }
        }
        if kept.is_empty() {
            return Err(Error::Undefined("every explanation in a group failed"));
        }
        let x = select_rows(&x, &kept);
        let clean = predictor.predict_proba(x.view())?;
        for k in 0..=config.max_k.min(d) {
            let mut removed: Array2<f64> = x.clone();
            for (r, order) in rankings.iter().enumerate() {
                for &j in order.iter().take(k) {
                    removed[[r, j]] = prepared.train_medians[j];
                }
            }
            let probs = predictor.predict_proba(removed.view())?;
            let mut shifts = Vec::with_capacity(kept.len());
            let mut n_clipped = 0;
            for r in 0..kept.len() {
                let (s, c) = log_odds_shift(&clean.row(r).to_vec(), &probs.row(r).to_vec())?;
                shifts.push(s);
                n_clipped += c as usize;
            }
            rows.push(RemovalRow {
                group: name.to_string(),
                k,
                mean_shift: mean(&shifts),
                std_shift: std(&shifts),
                n: shifts.len(),
                n_clipped,
            });
        }
    }
    Ok(RemovalResult {
        rows,
        group_epistemic,
        model_evals,
        n_failed,
    })
}

/// Feature indices by decreasing |φ|, ties by index.
pub(crate) fn top_features(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_shift_by_hand() {
        let (s, clipped) = log_odds_shift(&[0.1, 0.9], &[0.5, 0.5]).unwrap();
        let expected = (9.0f64).ln().powi(2);
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 4.83).abs() < 0.01);
        assert!(!clipped);
    }

    #[test]
    fn top_features_break_ties_by_index() {
        assert_eq!(top_features(&[0.5, -2.0, 0.5, 1.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn identical_is_zero_and_clipping_flagged() {
        assert_eq!(log_odds_shift(&[0.3, 0.7], &[0.3, 0.7]).unwrap().0, 0.0);
        let (s, clipped) = log_odds_shift(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert!(clipped);
        assert!(s.is_finite());
    }
}
