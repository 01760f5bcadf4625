//! Explanation stability within low / medium / high epistemic tertiles.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ascending, choose, epistemic, explain_rows, mean, select_rows, std, targets, CommonConfig};
use crate::data::{median, TabularDataset};
use crate::error::{Error, Result};
use crate::perturbation::{gaussian_noise_scaled, split_std};
use crate::rng;
use crate::stability::attribution_tau;

pub const STRATUM_NAMES: [&str; 3] = ["low", "medium", "high"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub per_stratum: usize,
    pub sigmas: Vec<f64>,
    pub n_seeds: usize,
}

impl StratifiedConfig {
    pub fn new(common: CommonConfig) -> Self {
        Self {
            common,
            per_stratum: 50,
            sigmas: vec![0.01, 0.05, 0.1],
            n_seeds: 10,
        }
    }
}

/// Split sample indices into three equal-frequency bins by ascending score
/// (ties by index). Bin sizes differ by at most one; the lower bins take
/// the remainder.
pub fn tertile_bins(scores: &[f64]) -> [Vec<usize>; 3] {
    let order = ascending(scores);
    let n = order.len();
    let base = n / 3;
    let extra = n % 3;
    let sizes = [base + usize::from(extra > 0), base + usize::from(extra > 1), base];
    let a = sizes[0];
    let b = a + sizes[1];
    [order[..a].to_vec(), order[a..b].to_vec(), order[b..].to_vec()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub sigma: f64,
    pub stratum: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// Per-sample τ averaged over noise seeds.
    pub taus: Vec<f64>,
    /// Test-split indices of the samples behind `taus`.
    pub samples: Vec<usize>,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataResult {
    pub summaries: Vec<StratumSummary>,
    /// Upper score bound of the low and medium bins.
    pub bin_edges: [f64; 2],
    pub model_evals: usize,
}

impl StrataResult {
    pub fn summary(&self, sigma: f64, stratum: &str) -> Option<&StratumSummary> {
        self.summaries.iter().find(|s| s.sigma == sigma && s.stratum == stratum)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sigma", "stratum", "sample", "tau", "mean", "median", "std"])?;
        for s in &self.summaries {
            for (sample, tau) in s.samples.iter().zip(&s.taus) {
                w.write_record([
                    s.sigma.to_string(),
                    s.stratum.clone(),
                    sample.to_string(),
                    tau.to_string(),
                    s.mean.to_string(),
                    s.median.to_string(),
                    s.std.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Score the clean test split, bin it into tertiles, draw `per_stratum`
/// samples per bin and measure τ under Gaussian noise for every σ averaged
/// over `n_seeds` noise draws.
pub fn run_stratified_validation(dataset: &TabularDataset, config: &StratifiedConfig) -> Result<StrataResult> {
    let common = &config.common;
    let prepared = common.prepare(dataset)?;
    let test = &prepared.splits.test;
    let uq_seed = rng::substream_seed(common.seed, &[20]);
    let scores = epistemic(&prepared, test.features.view(), common.reduction, uq_seed)?;
    let bins = tertile_bins(&scores);
    if bins.iter().any(|b| b.len() < config.per_stratum) {
        return Err(Error::InvalidInput(format!(
            "test split of {} samples cannot supply {} samples per stratum",
            scores.len(),
            config.per_stratum
        )));
    }
    let bin_edges = [scores[*bins[0].last().unwrap()], scores[*bins[1].last().unwrap()]];
    let test_std = split_std(test.features.view());
    let explainer = common.explainer();
    let explain_seed = rng::substream_seed(common.seed, &[21]);

    let mut summaries = Vec::new();
    let mut evals = 0;
    for (b, bin) in bins.iter().enumerate() {
        let chosen: Vec<usize> = choose(bin.len(), config.per_stratum, rng::substream_seed(common.seed, &[22, b as u64]))
            .into_iter()
            .map(|i| bin[i])
            .collect();
        let x = select_rows(&test.features, &chosen);
        let tgt = targets(&prepared, x.view())?;
        let clean = explain_rows(&explainer, &prepared, x.view(), &tgt, explain_seed);
        evals += clean.iter().flatten().map(|a| a.model_evals).sum::<usize>();
        for (si, &sigma) in config.sigmas.iter().enumerate() {
            let mut sums = vec![(0.0, 0usize); chosen.len()];
            for s in 0..config.n_seeds {
                let seed = rng::substream_seed(common.seed, &[23, b as u64, si as u64, s as u64]);
                let xp = gaussian_noise_scaled(x.view(), sigma, &test_std, seed);
                for (i, a) in explain_rows(&explainer, &prepared, xp.view(), &tgt, explain_seed)
                    .into_iter()
                    .enumerate()
                {
                    let (Ok(a), Ok(c)) = (a, &clean[i]) else { continue };
                    evals += a.model_evals;
                    if let Ok(t) = attribution_tau(&c.values, &a.values) {
                        sums[i].0 += t;
                        sums[i].1 += 1;
                    }
                }
            }
            let mut taus = Vec::new();
            let mut samples = Vec::new();
            for (i, &(total, count)) in sums.iter().enumerate() {
                if count > 0 {
                    taus.push(total / count as f64);
                    samples.push(chosen[i]);
                }
            }
            if taus.is_empty() {
                return Err(Error::Undefined("no valid Kendall tau in a stratum"));
            }
            summaries.push(StratumSummary {
                sigma,
                stratum: STRATUM_NAMES[b].to_string(),
                n: taus.len(),
                mean: mean(&taus),
                median: median(&taus).unwrap_or(f64::NAN),
                std: std(&taus),
                n_excluded: chosen.len() - taus.len(),
                taus,
                samples,
            });
        }
    }
    summaries.sort_by(|a, b| {
        a.sigma
            .total_cmp(&b.sigma)
            .then(stratum_index(&a.stratum).cmp(&stratum_index(&b.stratum)))
    });
    Ok(StrataResult {
        summaries,
        bin_edges,
        model_evals: evals,
    })
}

fn stratum_index(name: &str) -> usize {
    STRATUM_NAMES.iter().position(|s| *s == name).unwrap_or(3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_values_make_three_tertiles() {
        let scores = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6];
        let bins = tertile_bins(&scores);
        assert_eq!(bins[0], vec![1, 5, 3]);
        assert_eq!(bins[1], vec![7, 2, 8]);
        assert_eq!(bins[2], vec![4, 6, 0]);
    }

    #[test]
    fn bins_are_balanced() {
        for n in 3..40 {
            let scores: Vec<f64> = (0..n).map(|i| ((i * 7) % n) as f64).collect();
            let sizes: Vec<usize> = tertile_bins(&scores).iter().map(Vec::len).collect();
            assert_eq!(sizes.iter().sum::<usize>(), n);
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
