//! The epistemic gate: threshold calibration, routing decisions, stability
//! detection quality and relative cost.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kendall τ at or above which an explanation counts as stable.
pub const STABLE_TAU: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Low uncertainty gets a cheap explainer, high an expensive one.
    Route,
    /// Low uncertainty is explained, high is deferred.
    Defer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Cheap,
    Expensive,
    Explain,
    Defer,
}

impl Decision {
    /// Whether the sample is on the low-uncertainty side of the gate.
    pub fn is_accepted(&self) -> bool {
        matches!(self, Self::Cheap | Self::Explain)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Cheap => "cheap",
            Self::Expensive => "expensive",
            Self::Explain => "explain",
            Self::Defer => "defer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePolicy {
    /// Scores at or above this are high-uncertainty.
    pub threshold: f64,
    pub deferral_rate: f64,
    pub mode: GateMode,
}

/// A policy calibrated on a population, with the exact deferred set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub policy: GatePolicy,
    /// `true` for the `round(ν·n)` highest scores (ties: higher index first).
    pub deferred: Vec<bool>,
}

impl Calibration {
    pub fn decisions(&self) -> Vec<Decision> {
        self.deferred
            .iter()
            .map(|&d| high_low(self.policy.mode, d))
            .collect()
    }

    pub fn achieved_rate(&self) -> f64 {
        self.deferred.iter().filter(|&&d| d).count() as f64 / self.deferred.len() as f64
    }
}

fn high_low(mode: GateMode, high: bool) -> Decision {
    match (mode, high) {
        (GateMode::Route, false) => Decision::Cheap,
        (GateMode::Route, true) => Decision::Expensive,
        (GateMode::Defer, false) => Decision::Explain,
        (GateMode::Defer, true) => Decision::Defer,
    }
}

/// Sort by `(score, index)` ascending and mark the last `round(ν·n)` as
/// high-uncertainty. The threshold is the lowest high-uncertainty score
/// (`+∞` when nothing is deferred).
pub fn calibrate_threshold(scores: &[f64], nu: f64, mode: GateMode) -> Result<Calibration> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::InvalidInput(format!("deferral rate {nu} outside [0, 1]")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("epistemic scores contain NaN".into()));
    }
    let n = scores.len();
    let k = ((nu * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut deferred = vec![false; n];
    for &i in &order[n - k..] {
        deferred[i] = true;
    }
    let threshold = if k == 0 { f64::INFINITY } else { scores[order[n - k]] };
    Ok(Calibration {
        policy: GatePolicy {
            threshold,
            deferral_rate: nu,
            mode,
        },
        deferred,
    })
}

/// Decision for a new score; the threshold itself counts as high.
pub fn gate(policy: &GatePolicy, score: f64) -> Decision {
    high_low(policy.mode, !(score < policy.threshold))
}

pub fn stability_label(tau: f64) -> bool {
    tau >= STABLE_TAU
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    /// `None` when nothing was accepted.
    pub precision: Option<f64>,
    /// `None` when no sample is stable.
    pub recall: Option<f64>,
    pub n_accepted: usize,
    pub n_stable: usize,
}

/// Precision and recall of the accepted set for detecting stable samples.
pub fn precision_recall(accepted: &[bool], stable: &[bool]) -> Result<PrecisionRecall> {
    if accepted.len() != stable.len() {
        return Err(Error::DimensionMismatch {
            expected: accepted.len(),
            found: stable.len(),
        });
    }
    let n_accepted = accepted.iter().filter(|&&a| a).count();
    let n_stable = stable.iter().filter(|&&s| s).count();
    let hits = accepted.iter().zip(stable).filter(|(&a, &s)| a && s).count();
    Ok(PrecisionRecall {
        precision: (n_accepted > 0).then(|| hits as f64 / n_accepted as f64),
        recall: (n_stable > 0).then(|| hits as f64 / n_stable as f64),
        n_accepted,
        n_stable,
    })
}

/// Model evaluations for uncertainty (`m`) and explanation (`d_evals`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub m: f64,
    pub d_evals: f64,
    /// Uncertainty is a byproduct of inference (random forest).
    pub native_ensemble: bool,
}

impl CostModel {
    pub fn new(m: f64, d_evals: f64, native_ensemble: bool) -> Result<Self> {
        if !(m >= 1.0 && d_evals >= 1.0) {
            return Err(Error::InvalidInput("cost model needs m ≥ 1 and d ≥ 1".into()));
        }
        Ok(Self {
            m,
            d_evals,
            native_ensemble,
        })
    }
}

/// Total cost relative to explaining everything: `m/d + (1 − ν)`, or
/// `1/d + (1 − ν)` for a native ensemble.
pub fn relative_cost(cost: &CostModel, nu: f64) -> f64 {
    let overhead = if cost.native_ensemble { 1.0 } else { cost.m };
    overhead / cost.d_evals + (1.0 - nu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSample {
    pub index: usize,
    pub score: f64,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub policy: GatePolicy,
    pub achieved_rate: f64,
    pub samples: Vec<GateSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_recall: Option<PrecisionRecall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl GateReport {
    /// Calibrate on `scores` and gather decisions; `taus` adds precision and
    /// recall, `cost` adds the relative cost.
    pub fn build(
        scores: &[f64],
        nu: f64,
        mode: GateMode,
        taus: Option<&[f64]>,
        cost: Option<CostModel>,
    ) -> Result<Self> {
        let cal = calibrate_threshold(scores, nu, mode)?;
        let decisions = cal.decisions();
        if let Some(t) = taus {
            if t.len() != scores.len() {
                return Err(Error::DimensionMismatch {
                    expected: scores.len(),
                    found: t.len(),
                });
            }
        }
        let pr = match taus {
            Some(t) => {
                let accepted: Vec<bool> = decisions.iter().map(Decision::is_accepted).collect();
                let stable: Vec<bool> = t.iter().map(|&v| stability_label(v)).collect();
                Some(precision_recall(&accepted, &stable)?)
            }
            None => None,
        };
        let samples = scores
            .iter()
            .zip(&decisions)
            .enumerate()
            .map(|(i, (&score, &decision))| GateSample {
                index: i,
                score,
                decision,
                tau: taus.map(|t| t[i]),
            })
            .collect();
        Ok(Self {
            policy: cal.policy,
            achieved_rate: cal.achieved_rate(),
            samples,
            precision_recall: pr,
            cost,
            q: cost.map(|c| relative_cost(&c, nu)),
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample", "score", "decision", "tau"])?;
        for s in &self.samples {
            w.write_record([
                s.index.to_string(),
                s.score.to_string(),
                s.decision.as_str().to_string(),
                s.tau.map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
