//! Per-sample epistemic uncertainty from ensemble disagreement.
//!
//! The score of a sample is the population variance, across ensemble
//! members, of the predicted probability of one class (or the average of
//! those variances over classes).

use std::io::Write;

use ndarray::{Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Classifier, RandomForest, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpistemicSource {
    TreeVariance,
    Bootstrap,
    McDropout,
    RfSurrogate,
}

impl EpistemicSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TreeVariance => "tree_variance",
            Self::Bootstrap => "bootstrap",
            Self::McDropout => "mc_dropout",
            Self::RfSurrogate => "rf_surrogate",
        }
    }
}

/// How per-class member variances reduce to one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassReduction {
    /// Variance of the class with the highest mean probability.
    #[default]
    PredictedClass,
    MeanOverClasses,
}

/// Epistemic scores of a batch of samples, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpistemicScores {
    pub values: Vec<f64>,
    pub source: EpistemicSource,
    pub reduction: ClassReduction,
    /// Seed of stochastic members (MC dropout), if any were drawn.
    pub seed: Option<u64>,
}

impl EpistemicScores {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Write `sample,value,source` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sample,value,source")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v},{}", self.source.as_str())?;
        }
        Ok(())
    }
}

/// Variance across members for every sample of a `[M, n, K]` tensor.
pub fn ensemble_epistemic(members: &Array3<f64>, reduction: ClassReduction) -> Result<Vec<f64>> {
    let (m, n, k) = members.dim();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "epistemic variance needs at least 2 members, got {m}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut means = vec![0.0; k];
    let mut vars = vec![0.0; k];
    for i in 0..n {
        for c in 0..k {
            let first = members[[0, i, c]];
            if (1..m).all(|j| members[[j, i, c]] == first) {
                means[c] = first;
                vars[c] = 0.0;
                continue;
            }
            let mean = (0..m).map(|j| members[[j, i, c]]).sum::<f64>() / m as f64;
            means[c] = mean;
            vars[c] = (0..m).map(|j| (members[[j, i, c]] - mean).powi(2)).sum::<f64>() / m as f64;
        }
        out.push(match reduction {
            ClassReduction::PredictedClass => {
                let mut best = 0;
                for c in 1..k {
                    if means[c] > means[best] {
                        best = c;
                    }
                }
                vars[best]
            }
            ClassReduction::MeanOverClasses => vars.iter().sum::<f64>() / k as f64,
        });
    }
    Ok(out)
}

fn scores_from(
    model: &dyn Classifier,
    x: ArrayView2<f64>,
    reduction: ClassReduction,
    seed: u64,
    source: EpistemicSource,
) -> Result<EpistemicScores> {
    if !model.capabilities().has_members {
        return Err(Error::CapabilityAbsent(
            "ensemble members; gate this model with surrogate_epistemic",
        ));
    }
    let members = model.member_proba(x, seed)?;
    Ok(EpistemicScores {
        values: ensemble_epistemic(&members, reduction)?,
        source,
        reduction,
        seed: (source == EpistemicSource::McDropout).then_some(seed),
    })
}

/// Scores from the model's own estimator: tree variance, bootstrap
/// ensemble, or MC dropout (members drawn from `seed`).
pub fn native_epistemic(
    model: &TrainedModel,
    x: ArrayView2<f64>,
    reduction: ClassReduction,
    seed: u64,
) -> Result<EpistemicScores> {
    scores_from(model.uncertainty_model(), x, reduction, seed, model.epistemic_source())
}

/// Scores from any classifier that exposes members.
pub fn classifier_epistemic(
    model: &dyn Classifier,
    x: ArrayView2<f64>,
    reduction: ClassReduction,
    seed: u64,
    source: EpistemicSource,
) -> Result<EpistemicScores> {
    scores_from(model, x, reduction, seed, source)
}

/// Tree-variance scores of a random forest trained on the same split as an
/// opaque target model.
pub fn surrogate_epistemic(
    surrogate: &RandomForest,
    x: ArrayView2<f64>,
    reduction: ClassReduction,
) -> Result<EpistemicScores> {
    scores_from(surrogate, x, reduction, 0, EpistemicSource::RfSurrogate)
}

/// Mean, population std and coefficient of variation of a score set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpistemicSummary {
    pub mean: f64,
    pub std: f64,
    /// `std / mean`; `None` when the mean is zero.
    pub cv: Option<f64>,
}

pub fn epistemic_summary(scores: &[f64]) -> Result<EpistemicSummary> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to summarize".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = (scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EpistemicSummary {
        mean,
        std,
        cv: (mean > 0.0).then(|| std / mean),
    })
}
