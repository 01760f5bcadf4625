//! L2-regularized logistic regression and its bootstrap ensemble.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_input, softmax_in_place, Capabilities, Classifier};
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// Stop when the gradient norm of the mean objective drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Members of the bootstrap ensemble used for uncertainty.
    pub n_bootstrap: usize,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-6,
            max_iter: 50_000,
            n_bootstrap: 20,
            seed: 0,
        }
    }
}

/// Linear classifier. Binary models keep one weight row `w` and expose the
/// logits `(−z/2, z/2)` with `z = w·x + b`, which soft-max to the usual
/// sigmoid probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub n_classes: usize,
    pub l2_strength: f64,
}

impl LinearClassifier {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, n_classes: usize) -> Result<Self> {
        let rows = if n_classes == 2 { 1 } else { n_classes };
        if weights.nrows() != rows || bias.len() != rows || n_classes < 2 {
            return Err(Error::InvalidInput(format!(
                "linear model for {n_classes} classes needs {rows} weight rows"
            )));
        }
        Ok(Self {
            weights,
            bias,
            n_classes,
            l2_strength: 1.0,
        })
    }

    fn is_binary(&self) -> bool {
        self.n_classes == 2
    }

    /// Effective `[K, d]` matrix whose rows are the logit gradients.
    pub fn logit_weights(&self) -> Array2<f64> {
        if self.is_binary() {
            let w = self.weights.row(0);
            let mut out = Array2::zeros((2, w.len()));
            out.row_mut(0).assign(&w.mapv(|v| -0.5 * v));
            out.row_mut(1).assign(&w.mapv(|v| 0.5 * v));
            out
        } else {
            self.weights.clone()
        }
    }

    fn raw_scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

impl Classifier for LinearClassifier {
    fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_members: false,
            has_gradients: true,
            has_logits: true,
        }
    }

    fn predict_logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_input(self.n_features(), x)?;
        let s = self.raw_scores(x);
        if self.is_binary() {
            let mut out = Array2::zeros((x.nrows(), 2));
            for (i, &z) in s.column(0).iter().enumerate() {
                out[[i, 0]] = -0.5 * z;
                out[[i, 1]] = 0.5 * z;
            }
            Ok(out)
        } else {
            Ok(s)
        }
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_input(self.n_features(), x)?;
        let s = self.raw_scores(x);
        if self.is_binary() {
            let mut out = Array2::zeros((x.nrows(), 2));
            for (i, &z) in s.column(0).iter().enumerate() {
                let p = sigmoid(z);
                out[[i, 0]] = 1.0 - p;
                out[[i, 1]] = p;
            }
            Ok(out)
        } else {
            let mut out = s;
            for mut row in out.rows_mut() {
                softmax_in_place(row.as_slice_mut().expect("standard layout"));
            }
            Ok(out)
        }
    }

    fn logit_vjp(&self, x: ArrayView1<f64>, upstream: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.n_features() || upstream.len() != self.n_classes {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok(self.logit_weights().t().dot(&upstream))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean regularized cross-entropy and its gradient, parameters packed as
/// `[W (rows × d) | b (rows)]`.
struct Objective<'a> {
    x: ArrayView2<'a, f64>,
    labels: &'a [usize],
    n_classes: usize,
    lambda: f64,
}

impl Objective<'_> {
    fn rows(&self) -> usize {
        if self.n_classes == 2 {
            1
        } else {
            self.n_classes
        }
    }

    fn unpack(&self, theta: &Array1<f64>) -> (Array2<f64>, Array1<f64>) {
        let (r, d) = (self.rows(), self.x.ncols());
        let w = Array2::from_shape_vec((r, d), theta.slice(ndarray::s![..r * d]).to_vec())
            .expect("parameter layout");
        let b = theta.slice(ndarray::s![r * d..]).to_owned();
        (w, b)
    }

    fn eval(&self, theta: &Array1<f64>) -> (f64, Array1<f64>) {
        let n = self.x.nrows() as f64;
        let (w, b) = self.unpack(theta);
        let scores = self.x.dot(&w.t()) + &b;
        let mut loss = 0.0;
        // residual = p − onehot (rows × classes-or-1)
        let mut resid = Array2::<f64>::zeros(scores.dim());
        if self.n_classes == 2 {
            for (i, &z) in scores.column(0).iter().enumerate() {
                let y = self.labels[i] as f64;
                loss += softplus(z) - y * z;
                resid[[i, 0]] = sigmoid(z) - y;
            }
        } else {
            for (i, row) in scores.rows().into_iter().enumerate() {
                let mut p = row.to_vec();
                let m = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + p.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                loss += lse - row[self.labels[i]];
                softmax_in_place(&mut p);
                for (k, pk) in p.into_iter().enumerate() {
                    resid[[i, k]] = pk - f64::from(u8::from(k == self.labels[i]));
                }
            }
        }
        let reg = 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>();
        let value = (loss + reg) / n;
        let gw = (resid.t().dot(&self.x) + &w * self.lambda) / n;
        let gb = resid.sum_axis(Axis(0)) / n;
        let mut grad = Array1::zeros(theta.len());
        let split = gw.len();
        grad.slice_mut(ndarray::s![..split])
            .assign(&Array1::from_iter(gw.iter().copied()));
        grad.slice_mut(ndarray::s![split..]).assign(&gb);
        (value, grad)
    }
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Full-batch gradient descent with Armijo backtracking. The trial step is
/// the Barzilai–Borwein estimate from the previous iteration.
fn minimize(obj: &Objective, tol: f64, max_iter: usize) -> Result<Array1<f64>> {
    let n_params = obj.rows() * (obj.x.ncols() + 1);
    let mut theta = Array1::<f64>::zeros(n_params);
    let (mut f, mut g) = obj.eval(&theta);
    let mut step = 1.0;
    for _ in 0..max_iter {
        let gnorm = norm(&g);
        if gnorm < tol {
            return Ok(theta);
        }
        let g2 = gnorm * gnorm;
        let mut t = step;
        let (theta_new, f_new, g_new) = loop {
            let cand = &theta - &(&g * t);
            let (fc, gc) = obj.eval(&cand);
            if fc.is_finite() && fc <= f - 1e-4 * t * g2 {
                break (cand, fc, gc);
            }
            t *= 0.5;
            if t < 1e-20 {
                return Err(Error::NonConvergence {
                    iterations: 0,
                    grad_norm: gnorm,
                });
            }
        };
        let s = &theta_new - &theta;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        step = if sy > 0.0 { (s.dot(&s) / sy).clamp(1e-8, 1e8) } else { t * 2.0 };
        theta = theta_new;
        f = f_new;
        g = g_new;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        grad_norm: norm(&g),
    })
}

/// Fit logistic regression (sigmoid for two classes, softmax otherwise)
/// with an L2 penalty of strength `1/C` on the weights.
pub fn train_logistic(train: &TabularDataset, config: &LogisticConfig) -> Result<LinearClassifier> {
    fit_rows(train.features.view(), &train.labels, train.n_classes(), config)
}

fn fit_rows(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    config: &LogisticConfig,
) -> Result<LinearClassifier> {
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(Error::SingleClass);
    }
    let lambda = 1.0 / config.c;
    let obj = Objective {
        x,
        labels,
        n_classes,
        lambda,
    };
    let theta = minimize(&obj, config.tol, config.max_iter)?;
    let (w, b) = obj.unpack(&theta);
    let mut model = LinearClassifier::new(w, b, n_classes)?;
    model.l2_strength = lambda;
    Ok(model)
}

/// Bootstrap ensemble of logistic regressions. Ensemble probability is the
/// member mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEnsemble {
    pub members: Vec<LinearClassifier>,
    pub seed: u64,
}

/// Train `config.n_bootstrap` models on resamples drawn with replacement.
/// A resample containing a single class is redrawn from the next substream.
pub fn train_bootstrap_logistic(
    train: &TabularDataset,
    config: &LogisticConfig,
) -> Result<BootstrapEnsemble> {
    let n = train.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut members = Vec::with_capacity(config.n_bootstrap);
    for m in 0..config.n_bootstrap {
        let mut attempt = 0u64;
        let member = loop {
            let mut r = rng::substream(config.seed, &[m as u64, attempt]);
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let sub = train.subset(&idx);
            match fit_rows(sub.features.view(), &sub.labels, train.n_classes(), config) {
                Err(Error::SingleClass) if attempt < 16 => attempt += 1,
                other => break other?,
            }
        };
        members.push(member);
    }
    Ok(BootstrapEnsemble {
        members,
        seed: config.seed,
    })
}

impl Classifier for BootstrapEnsemble {
    fn n_features(&self) -> usize {
        self.members[0].n_features()
    }

    fn n_classes(&self) -> usize {
        self.members[0].n_classes
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_members: true,
            has_gradients: false,
            has_logits: false,
        }
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(super::member_mean(&self.member_proba(x, 0)?))
    }

    fn member_proba(&self, x: ArrayView2<f64>, _seed: u64) -> Result<Array3<f64>> {
        check_input(self.n_features(), x)?;
        let mut out = Array3::zeros((self.members.len(), x.nrows(), self.n_classes()));
        for (m, member) in self.members.iter().enumerate() {
            out.index_axis_mut(Axis(0), m).assign(&member.predict_proba(x)?);
        }
        Ok(out)
    }
}
