//! Post-hoc feature attributions.
//!
//! All Shapley-style methods share one value function: the interventional
//! expectation `f_S(x) = mean_b f(x_S, b_{S̄})` over a background set, so the
//! exact oracle, KernelSHAP and tree Shapley values agree on what they
//! estimate.

mod gradient;
mod kernel_shap;
mod lime;
mod shapley;
mod tree_shap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Classifier, RandomForest};
use crate::rng;

pub use gradient::{integrated_gradients, smooth, vanilla_gradient, IgConfig, SmoothBase};
pub use kernel_shap::{kernel_shap, KernelShapConfig};
pub use lime::{lime, LimeConfig, TrainStats};
pub use shapley::{exact_shapley_oracle, shapley_weight, MAX_ORACLE_FEATURES};
pub use tree_shap::tree_shap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    KernelShap,
    TreeShap,
    Lime,
    Ig,
    Smoothgrad,
    SmoothIg,
    ExactShapley,
}

impl AttributionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::KernelShap => "kernel_shap",
            Self::TreeShap => "tree_shap",
            Self::Lime => "lime",
            Self::Ig => "ig",
            Self::Smoothgrad => "smoothgrad",
            Self::SmoothIg => "smooth_ig",
            Self::ExactShapley => "exact_shapley",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "kernel_shap" => Self::KernelShap,
            "tree_shap" => Self::TreeShap,
            "lime" => Self::Lime,
            "ig" => Self::Ig,
            "smoothgrad" | "sg" => Self::Smoothgrad,
            "smooth_ig" | "sig" => Self::SmoothIg,
            "exact_shapley" => Self::ExactShapley,
            _ => return None,
        })
    }

    /// Gradient methods explain logits; the others explain probabilities.
    pub fn output_space(&self) -> OutputSpace {
        match self {
            Self::Ig | Self::Smoothgrad | Self::SmoothIg => OutputSpace::Logit,
            _ => OutputSpace::Probability,
        }
    }
}

/// Signed per-feature attribution for one sample and one target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub values: Vec<f64>,
    pub target_class: usize,
    pub method: AttributionMethod,
    /// Model evaluations spent (rows scored, gradient passes, or
    /// tree–reference traversals for tree Shapley values).
    pub model_evals: usize,
    /// Features kept by a top-k filter (LIME); `None` when all are kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
    /// The regression system was singular and a ridge term was added.
    #[serde(default)]
    pub stabilized: bool,
}

impl AttributionVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Which model output an attribution explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSpace {
    Probability,
    Logit,
}

/// Scalar function of a batch of inputs, the object Shapley and LIME
/// explainers query.
pub trait ScalarModel: Sync {
    fn n_features(&self) -> usize;
    fn eval(&self, x: ArrayView2<f64>) -> Result<Vec<f64>>;
    /// Class index recorded on the attribution.
    fn target(&self) -> usize {
        0
    }
}

/// One class's probability or logit from a classifier.
pub struct ClassOutput<'a> {
    pub model: &'a dyn Classifier,
    pub target: usize,
    pub space: OutputSpace,
}

impl<'a> ClassOutput<'a> {
    pub fn new(model: &'a dyn Classifier, target: usize, space: OutputSpace) -> Result<Self> {
        if target >= model.n_classes() {
            return Err(Error::InvalidInput(format!("target class {target} out of range")));
        }
        Ok(Self { model, target, space })
    }

    pub fn probability(model: &'a dyn Classifier, target: usize) -> Result<Self> {
        Self::new(model, target, OutputSpace::Probability)
    }
}

impl ScalarModel for ClassOutput<'_> {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn eval(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let out = match self.space {
            OutputSpace::Probability => self.model.predict_proba(x)?,
            OutputSpace::Logit => self.model.predict_logits(x)?,
        };
        Ok(out.column(self.target).to_vec())
    }

    fn target(&self) -> usize {
        self.target
    }
}

/// Closure-backed scalar model, mainly for tests and oracles.
pub struct FnModel<F> {
    pub n_features: usize,
    pub f: F,
}

impl<F: Fn(ArrayView1<f64>) -> f64 + Sync> ScalarModel for FnModel<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn eval(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(x.rows().into_iter().map(|r| (self.f)(r)).collect())
    }
}

/// Reference rows defining "absent" features for Shapley values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub rows: Array2<f64>,
}

impl BackgroundSet {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidInput("background set is empty".into()));
        }
        Ok(Self { rows })
    }

    /// `size` rows drawn without replacement from `train` (all rows when the
    /// split is smaller).
    pub fn sample(train: ArrayView2<f64>, size: usize, seed: u64) -> Result<Self> {
        let n = train.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("cannot sample background from empty data".into()));
        }
        let mut idx = sample(&mut rng::rng(seed), n, size.min(n)).into_vec();
        idx.sort_unstable();
        Self::new(train.select(Axis(0), &idx))
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }
}

/// Ranks of `|φ_i|` in ascending order (1 = smallest), ties get their
/// average rank.
pub fn abs_ranking(values: &[f64]) -> Vec<f64> {
    average_ranks(&values.iter().map(|v| v.abs()).collect::<Vec<_>>())
}

/// Ascending ranks starting at 1 with ties averaged.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Predicted class of a single input.
pub fn predicted_class(model: &dyn Classifier, x: ArrayView1<f64>) -> Result<usize> {
    Ok(model.predict(x.insert_axis(Axis(0)))?[0])
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Mean model output over the background with features in `mask` taken
/// from `x`, for every mask in `masks`. Evaluates in chunks.
pub(crate) fn coalition_values(
    model: &dyn ScalarModel,
    x: ArrayView1<f64>,
    background: &BackgroundSet,
    masks: &[Vec<bool>],
) -> Result<Vec<f64>> {
    let b = background.len();
    let d = x.len();
    let per_chunk = (8192 / b).max(1);
    let mut out = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(per_chunk) {
        let mut batch = Array2::zeros((chunk.len() * b, d));
        for (c, mask) in chunk.iter().enumerate() {
            for r in 0..b {
                let mut row = batch.row_mut(c * b + r);
                row.assign(&background.rows.row(r));
                for (j, &on) in mask.iter().enumerate() {
                    if on {
                        row[j] = x[j];
                    }
                }
            }
        }
        let vals = model.eval(batch.view())?;
        for c in 0..chunk.len() {
            out.push(vals[c * b..(c + 1) * b].iter().sum::<f64>() / b as f64);
        }
    }
    Ok(out)
}

/// Attribution method plus the settings each one needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub method: AttributionMethod,
    pub kernel_shap: KernelShapConfig,
    pub lime: LimeConfig,
    pub ig: IgConfig,
    /// Noise draws and scale for SmoothGrad.
    pub smoothgrad_samples: usize,
    pub smooth_ig_samples: usize,
    pub smooth_sigma: f64,
}

impl ExplainerConfig {
    pub fn new(method: AttributionMethod) -> Self {
        Self {
            method,
            kernel_shap: KernelShapConfig::default(),
            lime: LimeConfig::default(),
            ig: IgConfig::default(),
            smoothgrad_samples: 20,
            smooth_ig_samples: 50,
            smooth_sigma: 0.1,
        }
    }
}

/// Everything an attribution call may need besides the input itself.
pub struct ExplainContext<'a> {
    pub predictor: &'a dyn Classifier,
    pub forest: Option<&'a RandomForest>,
    pub background: &'a BackgroundSet,
    pub train_stats: &'a TrainStats,
}

/// Explain `x` for class `target` with the configured method. `seed` drives
/// the stochastic methods (KernelSHAP sampling, LIME, smoothing noise).
pub fn explain(
    config: &ExplainerConfig,
    ctx: &ExplainContext,
    x: ArrayView1<f64>,
    target: usize,
    seed: u64,
) -> Result<AttributionVector> {
    let model = ctx.predictor;
    match config.method {
        AttributionMethod::TreeShap => {
            let forest = ctx
                .forest
                .ok_or(Error::CapabilityAbsent("tree Shapley values need a random forest"))?;
            tree_shap(forest, x, ctx.background, target)
        }
        AttributionMethod::KernelShap => {
            let out = ClassOutput::probability(model, target)?;
            let cfg = KernelShapConfig {
                seed,
                ..config.kernel_shap
            };
            kernel_shap(&out, x, ctx.background, &cfg)
        }
        AttributionMethod::ExactShapley => {
            let out = ClassOutput::probability(model, target)?;
            exact_shapley_oracle(&out, x, ctx.background)
        }
        AttributionMethod::Lime => {
            let out = ClassOutput::probability(model, target)?;
            let cfg = LimeConfig {
                seed,
                ..config.lime.clone()
            };
            lime(&out, x, ctx.train_stats, &cfg)
        }
        AttributionMethod::Ig => integrated_gradients(model, x, &config.ig, target),
        AttributionMethod::Smoothgrad => smooth(
            SmoothBase::VanillaGradient,
            model,
            x,
            target,
            config.smoothgrad_samples,
            config.smooth_sigma,
            seed,
        ),
        AttributionMethod::SmoothIg => smooth(
            SmoothBase::IntegratedGradients(config.ig.clone()),
            model,
            x,
            target,
            config.smooth_ig_samples,
            config.smooth_sigma,
            seed,
        ),
    }
}

pub(crate) fn to_vec(a: Array1<f64>) -> Vec<f64> {
    a.into_raw_vec_and_offset().0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_ranking_examples() {
        assert_eq!(abs_ranking(&[-3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(abs_ranking(&[2.0, -2.0, 2.0, 2.0]), vec![2.5; 4]);
        assert_eq!(abs_ranking(&[0.7]), vec![1.0]);
    }

    #[test]
    fn average_ranks_with_partial_ties() {
        assert_eq!(average_ranks(&[0.0, 5.0, 0.0, 1.0]), vec![1.5, 4.0, 1.5, 3.0]);
    }

    #[test]
    fn background_sampling_is_seeded() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| (i * 2 + j) as f64);
        let a = BackgroundSet::sample(x.view(), 10, 3).unwrap();
        let b = BackgroundSet::sample(x.view(), 10, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_eq!(BackgroundSet::sample(x.view(), 100, 3).unwrap().len(), 50);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            AttributionMethod::KernelShap,
            AttributionMethod::TreeShap,
            AttributionMethod::Lime,
            AttributionMethod::Ig,
            AttributionMethod::Smoothgrad,
            AttributionMethod::SmoothIg,
            AttributionMethod::ExactShapley,
        ] {
            assert_eq!(AttributionMethod::parse(m.as_str()), Some(m));
        }
    }
}
