//! End-to-end studies relating epistemic uncertainty to explanation
//! stability, gating quality, cost and faithfulness.
//!
//! Every study starts from a raw [`TabularDataset`], splits and standardizes
//! it, trains the configured model and writes a JSON report plus one CSV of
//! plot data.

mod correlation;
mod mixed_noise;
mod removal;
mod signal_mass;
mod stratified;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::{
    explain, predicted_class, AttributionMethod, AttributionVector, BackgroundSet, ExplainContext, ExplainerConfig,
    TrainStats,
};
use crate::data::{column_median, fit_standardizer, split, SplitSpec, Splits, Standardizer, TabularDataset};
use crate::error::{Error, Result};
use crate::models::{
    train_bootstrap_logistic, train_logistic, train_mlp, train_random_forest, ForestConfig, LogisticConfig, MlpConfig,
    TrainedModel,
};
use crate::rng;
use crate::uncertainty::{native_epistemic, ClassReduction};

pub use correlation::{run_correlation_study, CorrelationCell, CorrelationConfig, CorrelationResult};
pub use mixed_noise::{cost_model_for, run_mixed_noise_gating, CostRow, GatingResult, MixedNoiseConfig, PooledRecord, PrRow};
pub use removal::{log_odds_shift, run_feature_removal, RemovalConfig, RemovalResult, RemovalRow};
pub use signal_mass::{run_signal_mass, signal_mass, SignalMassConfig, SignalMassResult, SignalMassRow};
pub use stratified::{run_stratified_validation, tertile_bins, StrataResult, StratifiedConfig, StratumSummary, STRATUM_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lr,
    Rf,
    Mlp,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Lr => "lr",
            Self::Rf => "rf",
            Self::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "lr" => Self::Lr,
            "rf" => Self::Rf,
            "mlp" => Self::Mlp,
            _ => return None,
        })
    }
}

/// Hyperparameters for every model family; seeds are filled in from the
/// experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingConfig {
    #[serde(default)]
    pub logistic: LogisticConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub mlp: MlpConfig,
}

/// Train one model family on standardized splits.
pub fn train_model(kind: ModelKind, splits: &Splits, config: &TrainingConfig, seed: u64) -> Result<TrainedModel> {
    Ok(match kind {
        ModelKind::Lr => {
            let cfg = LogisticConfig {
                seed,
                ..config.logistic
            };
            TrainedModel::Logistic {
                model: train_logistic(&splits.train, &cfg)?,
                bootstrap: train_bootstrap_logistic(&splits.train, &cfg)?,
            }
        }
        ModelKind::Rf => TrainedModel::RandomForest {
            forest: train_random_forest(
                &splits.train,
                &ForestConfig {
                    seed,
                    ..config.forest
                },
            )?,
        },
        ModelKind::Mlp => TrainedModel::Mlp {
            network: train_mlp(
                &splits.train,
                &splits.val,
                &MlpConfig {
                    seed,
                    ..config.mlp.clone()
                },
            )?,
        },
    })
}

/// A dataset split, standardized on its training part, with a trained
/// model and the statistics explainers need.
pub struct Prepared {
    /// Standardized splits.
    pub splits: Splits,
    pub standardizer: Standardizer,
    pub model: TrainedModel,
    pub background: BackgroundSet,
    pub train_stats: TrainStats,
    /// Column medians of the standardized training split.
    pub train_medians: Vec<f64>,
}

impl Prepared {
    pub fn context(&self) -> ExplainContext<'_> {
        ExplainContext {
            predictor: self.model.predictor(),
            forest: self.model.forest(),
            background: &self.background,
            train_stats: &self.train_stats,
        }
    }
}

/// Split, standardize and train. Model and background seeds are
/// substreams of `seed`.
pub fn prepare(
    dataset: &TabularDataset,
    kind: ModelKind,
    split_spec: &SplitSpec,
    training: &TrainingConfig,
    background_size: usize,
    seed: u64,
) -> Result<Prepared> {
    let raw = split(dataset, split_spec)?;
    let standardizer = fit_standardizer(&raw.train)?;
    let splits = Splits {
        train: standardizer.apply_dataset(&raw.train)?,
        val: standardizer.apply_dataset(&raw.val)?,
        test: standardizer.apply_dataset(&raw.test)?,
        indices: raw.indices,
    };
    prepare_standardized(splits, standardizer, kind, training, background_size, seed)
}

/// [`prepare`] for splits that are already standardized.
pub fn prepare_standardized(
    splits: Splits,
    standardizer: Standardizer,
    kind: ModelKind,
    training: &TrainingConfig,
    background_size: usize,
    seed: u64,
) -> Result<Prepared> {
    let model = train_model(kind, &splits, training, rng::substream_seed(seed, &[1]))?;
    let background = BackgroundSet::sample(
        splits.train.features.view(),
        background_size,
        rng::substream_seed(seed, &[2]),
    )?;
    let train_stats = TrainStats::from_data(splits.train.features.view());
    let train_medians = column_median(&splits.train.features);
    Ok(Prepared {
        splits,
        standardizer,
        model,
        background,
        train_stats,
        train_medians,
    })
}

/// Settings shared by all studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonConfig {
    pub dataset: String,
    pub model: ModelKind,
    pub method: AttributionMethod,
    pub seed: u64,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub training: TrainingConfig,
    pub background_size: usize,
    #[serde(default)]
    pub reduction: ClassReduction,
}

impl CommonConfig {
    pub fn new(dataset: impl Into<String>, model: ModelKind, method: AttributionMethod, seed: u64) -> Self {
        Self {
            dataset: dataset.into(),
            model,
            method,
            seed,
            split: SplitSpec::default(),
            training: TrainingConfig::default(),
            background_size: 100,
            reduction: ClassReduction::PredictedClass,
        }
    }

    pub fn explainer(&self) -> ExplainerConfig {
        ExplainerConfig::new(self.method)
    }

    pub fn prepare(&self, dataset: &TabularDataset) -> Result<Prepared> {
        prepare(
            dataset,
            self.model,
            &self.split,
            &self.training,
            self.background_size,
            self.seed,
        )
    }
}

/// Predicted class of every row.
pub(crate) fn targets(prepared: &Prepared, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    prepared.model.predictor().predict(x)
}

/// Explain every row of `x` for its given target. Row `i` uses seed
/// substream `(seed, i)`, so clean and perturbed versions of a sample share
/// their explainer randomness.
pub(crate) fn explain_rows(
    config: &ExplainerConfig,
    prepared: &Prepared,
    x: ArrayView2<f64>,
    targets: &[usize],
    seed: u64,
) -> Vec<Result<AttributionVector>> {
    let ctx = prepared.context();
    (0..x.nrows())
        .into_par_iter()
        .map(|i| explain(config, &ctx, x.row(i), targets[i], rng::substream_seed(seed, &[i as u64])))
        .collect()
}

/// Native epistemic scores of every row.
pub(crate) fn epistemic(prepared: &Prepared, x: ArrayView2<f64>, reduction: ClassReduction, seed: u64) -> Result<Vec<f64>> {
    Ok(native_epistemic(&prepared.model, x, reduction, seed)?.values)
}

/// `n` distinct indices out of `0..total`, sorted.
pub(crate) fn choose(total: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut idx = sample(&mut rng::rng(seed), total, n.min(total)).into_vec();
    idx.sort_unstable();
    idx
}

/// Indices of `scores` sorted ascending, ties by index.
pub(crate) fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// Lowest, highest and random groups of `size` samples by score. The random
/// group is drawn from the samples in neither extreme group.
pub(crate) fn extreme_groups(scores: &[f64], size: usize, seed: u64) -> Result<[Vec<usize>; 3]> {
    let n = scores.len();
    if n < 3 * size {
        return Err(Error::InvalidInput(format!(
            "{n} samples cannot form three groups of {size}"
        )));
    }
    let order = ascending(scores);
    let low = order[..size].to_vec();
    let high = order[n - size..].to_vec();
    let middle = &order[size..n - size];
    let random = choose(middle.len(), size, seed)
        .into_iter()
        .map(|i| middle[i])
        .collect();
    Ok([low, high, random])
}

pub(crate) const GROUP_NAMES: [&str; 3] = ["low", "high", "random"];

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub(crate) fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

pub(crate) fn select_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(0), rows)
}

/// Study-specific results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum StudyResult {
    Correlation(CorrelationResult),
    Stratified(StrataResult),
    Gating(GatingResult),
    Removal(RemovalResult),
    SignalMass(SignalMassResult),
}

/// A study's configuration, input fingerprint and results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: serde_json::Value,
    /// SHA-256 over the config JSON and the dataset contents.
    pub input_hash: String,
    pub crate_version: String,
    pub result: StudyResult,
}

impl ExperimentReport {
    pub fn new<C: Serialize>(name: &str, config: &C, dataset: &TabularDataset, result: StudyResult) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Self {
            name: name.to_string(),
            input_hash: input_hash(&config, dataset)?,
            config,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            result,
        })
    }

    /// Write `report.json` and the study's CSV into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        match &self.result {
            StudyResult::Correlation(r) => r.write_csv(&dir.join("fig2_xec.csv")),
            StudyResult::Stratified(r) => r.write_csv(&dir.join("fig3_strata.csv")),
            StudyResult::Gating(r) => {
                r.write_pr_csv(&dir.join("tab3_pr.csv"))?;
                r.write_cost_csv(&dir.join("tab4_cost.csv"))?;
                r.write_scatter_csv(&dir.join("figB_scatter.csv"))
            }
            StudyResult::Removal(r) => r.write_csv(&dir.join("fig4_removal.csv")),
            StudyResult::SignalMass(r) => r.write_csv(&dir.join("figC_signalmass.csv")),
        }
    }
}

/// Hex SHA-256 of the config JSON followed by the dataset's feature bits
/// and labels.
pub fn input_hash(config: &serde_json::Value, dataset: &TabularDataset) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    for v in dataset.features.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    for &y in &dataset.labels {
        h.update((y as u64).to_le_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// Predicted class of one row, for callers outside the batch helpers.
pub fn predict_one(prepared: &Prepared, x: ndarray::ArrayView1<f64>) -> Result<usize> {
    predicted_class(prepared.model.predictor(), x)
}
