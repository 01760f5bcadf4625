//! Classifier families and the shared prediction interface.

mod forest;
mod io;
mod linear;
mod mlp;
mod tree;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{train_random_forest, ForestConfig, RandomForest};
pub use io::{ModelFile, TrainedModel};
pub use linear::{
    train_bootstrap_logistic, train_logistic, BootstrapEnsemble, LinearClassifier, LogisticConfig,
};
pub use mlp::{train_mlp, MlpClassifier, MlpConfig};
pub use tree::{DecisionTree, Node, TreeConfig};

/// What a classifier can provide beyond class probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    /// Per-member probabilities (`member_proba`).
    pub has_members: bool,
    /// Input gradients of the logits (`logit_vjp`, `input_gradient`).
    pub has_gradients: bool,
    pub has_logits: bool,
}

/// A trained model mapping `d` features to a distribution over `K` classes.
///
/// Implementations are immutable after training and safe to share across
/// threads.
pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn capabilities(&self) -> Capabilities;

    /// Class probabilities, one row per input row.
    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;

    fn predict_logits(&self, _x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Err(Error::CapabilityAbsent("logits"))
    }

    /// Probabilities of every ensemble member, shaped `[M, n, K]`.
    ///
    /// `seed` drives stochastic members (MC dropout) and is ignored by
    /// deterministic ensembles.
    fn member_proba(&self, _x: ArrayView2<f64>, _seed: u64) -> Result<Array3<f64>> {
        Err(Error::CapabilityAbsent(
            "ensemble members (use a random-forest surrogate for uncertainty)",
        ))
    }

    /// Vector-Jacobian product `Σ_k upstream_k ∂z_k/∂x` of the logits `z`
    /// at a single input, in deterministic (eval) mode.
    fn logit_vjp(&self, _x: ArrayView1<f64>, _upstream: ArrayView1<f64>) -> Result<Array1<f64>> {
        Err(Error::CapabilityAbsent("input gradients"))
    }

    /// Gradient of the logit of class `target` with respect to the input.
    fn input_gradient(&self, x: ArrayView1<f64>, target: usize) -> Result<Array1<f64>> {
        if target >= self.n_classes() {
            return Err(Error::InvalidInput(format!("target class {target} out of range")));
        }
        let mut upstream = Array1::zeros(self.n_classes());
        upstream[target] = 1.0;
        self.logit_vjp(x, upstream.view())
    }

    /// Most probable class per row (lowest index on ties).
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self.predict_proba(x)?.rows().into_iter().map(|r| argmax(r)).collect())
    }
}

pub(crate) fn check_input(expected: usize, x: ArrayView2<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.ncols(),
        });
    }
    Ok(())
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax with max-subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
    out
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Mean over the member axis of a `[M, n, K]` tensor.
pub fn member_mean(members: &Array3<f64>) -> Array2<f64> {
    members
        .mean_axis(Axis(0))
        .expect("member tensor has at least one member")
}

/// Macro-averaged F1 for multi-class, positive-class F1 for binary labels.
pub fn f1_score(truth: &[usize], pred: &[usize], n_classes: usize) -> f64 {
    let f1_for = |k: usize| {
        let tp = truth.iter().zip(pred).filter(|(&t, &p)| t == k && p == k).count() as f64;
        let fp = truth.iter().zip(pred).filter(|(&t, &p)| t != k && p == k).count() as f64;
        let fne = truth.iter().zip(pred).filter(|(&t, &p)| t == k && p != k).count() as f64;
        if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fne)
        }
    };
    if n_classes == 2 {
        f1_for(1)
    } else {
        (0..n_classes).map(f1_for).sum::<f64>() / n_classes as f64
    }
}

pub fn accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&array![[1000.0, 1000.0], [0.0, -1e4]]);
        assert!((p[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((p.row(1).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(array![0.2, 0.4, 0.4].view()), 1);
    }

    #[test]
    fn f1_binary_and_macro() {
        let t = [1, 1, 0, 0];
        let p = [1, 0, 0, 1];
        assert!((f1_score(&t, &p, 2) - 0.5).abs() < 1e-12);
        let t3 = [0, 1, 2];
        assert!((f1_score(&t3, &t3, 3) - 1.0).abs() < 1e-12);
    }
}
