//! Fully connected ReLU network with dropout, trained by Adam with manual
//! backpropagation.
//!
//! Reductions run in a fixed order (row-major matrix products, sums over
//! rows in index order), so identical seeds give identical parameters on a
//! given build.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_input, softmax_rows, Capabilities, Classifier};
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    /// Stochastic forward passes used as MC-dropout members.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            dropout: 0.3,
            learning_rate: 1e-3,
            max_epochs: 100,
            batch_size: 32,
            patience: 10,
            mc_samples: 50,
            seed: 0,
        }
    }
}

/// Affine layer `x ↦ x W + b` with `W` shaped `[in, out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    /// Weight init: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub init: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier {
    pub layers: Vec<Dense>,
    pub config: MlpConfig,
    pub n_features: usize,
    pub n_classes: usize,
    pub log: TrainingLog,
}

struct Cache {
    /// Input to each layer (after activation and dropout of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    /// Scaled dropout masks of hidden layers (`None` in eval mode).
    masks: Vec<Option<Array2<f64>>>,
}

impl MlpClassifier {
    /// Network with freshly initialized parameters.
    pub fn init(n_features: usize, n_classes: usize, config: &MlpConfig) -> Result<Self> {
        if n_features == 0 || n_classes < 2 {
            return Err(Error::InvalidInput("MLP needs d >= 1 and K >= 2".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::InvalidInput("dropout must be in [0, 1)".into()));
        }
        let mut r = rng::substream(config.seed, &[0]);
        let mut sizes = vec![n_features];
        sizes.extend(&config.hidden);
        sizes.push(n_classes);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    w: Array2::from_shape_simple_fn((w[0], w[1]), || r.random_range(-bound..bound)),
                    b: Array1::from_shape_simple_fn(w[1], || r.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Self {
            layers,
            config: config.clone(),
            n_features,
            n_classes,
            log: TrainingLog {
                epochs_run: 0,
                best_epoch: 0,
                best_val_loss: None,
                init: "uniform_fan_in".into(),
            },
        })
    }

    fn forward(&self, x: ArrayView2<f64>, masks: Option<&[Array2<f64>]>) -> (Array2<f64>, Cache) {
        let n_hidden = self.layers.len() - 1;
        let mut cache = Cache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(n_hidden),
            masks: Vec::with_capacity(n_hidden),
        };
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.w) + &layer.b;
            cache.inputs.push(h);
            if l == n_hidden {
                return (z, cache);
            }
            let mut a = z.mapv(|v| v.max(0.0));
            let mask = masks.map(|m| m[l].clone());
            if let Some(m) = &mask {
                a *= m;
            }
            cache.pre.push(z);
            cache.masks.push(mask);
            h = a;
        }
        unreachable!("network has an output layer")
    }

    /// Backpropagate `dlogits`; returns per-layer `(dW, db)` and the input
    /// gradient.
    fn backward(&self, dlogits: Array2<f64>, cache: &Cache) -> (Vec<(Array2<f64>, Array1<f64>)>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits;
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            grads.push((input.t().dot(&delta), delta.sum_axis(Axis(0))));
            let mut dinput = delta.dot(&self.layers[l].w.t());
            if l > 0 {
                let pre = &cache.pre[l - 1];
                ndarray::Zip::from(&mut dinput)
                    .and(pre)
                    .for_each(|g, &z| if z <= 0.0 { *g = 0.0 });
                if let Some(m) = &cache.masks[l - 1] {
                    dinput *= m;
                }
            }
            delta = dinput;
        }
        grads.reverse();
        (grads, delta)
    }

    /// Mean cross-entropy and `dloss/dlogits`.
    fn loss_grad(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
        let n = logits.nrows() as f64;
        let p = softmax_rows(logits);
        let mut loss = 0.0;
        let mut d = p;
        for (i, &y) in labels.iter().enumerate() {
            let row = logits.row(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            d[[i, y]] -= 1.0;
        }
        (loss / n, d / n)
    }

    fn dropout_masks<R: rand::Rng>(&self, n: usize, rows: impl Fn(usize) -> R) -> Vec<Array2<f64>> {
        let p = self.config.dropout;
        let keep_scale = 1.0 / (1.0 - p);
        let widths: Vec<usize> = self.layers[..self.layers.len() - 1].iter().map(|l| l.b.len()).collect();
        let mut masks: Vec<Array2<f64>> = widths.iter().map(|&w| Array2::zeros((n, w))).collect();
        for i in 0..n {
            let mut r = rows(i);
            for (l, &w) in widths.iter().enumerate() {
                for j in 0..w {
                    masks[l][[i, j]] = if r.random::<f64>() < p { 0.0 } else { keep_scale };
                }
            }
        }
        masks
    }

    /// Number of trainable parameters.
    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened as `[W0 (row-major), b0, W1, b1, ...]`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_parameters() {
            return Err(Error::DimensionMismatch {
                expected: self.n_parameters(),
                found: params.len(),
            });
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v = *it.next().expect("length checked"));
            l.b.iter_mut().for_each(|v| *v = *it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Mean cross-entropy (dropout off) and its gradient with respect to
    /// [`parameters`](Self::parameters).
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        check_input(self.n_features, x)?;
        let (logits, cache) = self.forward(x, None);
        let (loss, d) = Self::loss_grad(&logits, labels);
        let (grads, _) = self.backward(d, &cache);
        let mut flat = Vec::with_capacity(self.n_parameters());
        for (gw, gb) in grads {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
        Ok((loss, flat))
    }

    pub fn loss(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        check_input(self.n_features, x)?;
        let (logits, _) = self.forward(x, None);
        Ok(Self::loss_grad(&logits, labels).0)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Train with Adam on shuffled mini-batches, dropout active. After every
/// epoch the validation loss is measured in eval mode; the best parameters
/// are restored when training ends or stops early.
pub fn train_mlp(train: &TabularDataset, val: &TabularDataset, config: &MlpConfig) -> Result<MlpClassifier> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = MlpClassifier::init(train.n_features(), train.n_classes(), config)?;
    if config.max_epochs == 0 {
        return Ok(model);
    }
    let validate = |m: &MlpClassifier| -> Result<f64> {
        if val.is_empty() {
            m.loss(train.features.view(), &train.labels)
        } else {
            m.loss(val.features.view(), &val.labels)
        }
    };

    let mut params = model.parameters();
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut best = (validate(&model)?, params.clone(), 0usize);
    let mut since_best = 0;
    let n = train.len();
    let bs = config.batch_size.max(1);
    let mut epochs_run = 0;

    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::substream(config.seed, &[1, epoch as u64]));
        for (b, chunk) in order.chunks(bs).enumerate() {
            let xb = train.features.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let masks = model.dropout_masks(chunk.len(), |i| {
                rng::substream(config.seed, &[2, epoch as u64, b as u64, i as u64])
            });
            let (logits, cache) = model.forward(xb.view(), Some(&masks));
            let (loss, d) = MlpClassifier::loss_grad(&logits, &yb);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let (grads, _) = model.backward(d, &cache);
            let flat: Vec<f64> = grads
                .iter()
                .flat_map(|(gw, gb)| gw.iter().chain(gb.iter()).copied())
                .collect();
            adam.step(&mut params, &flat);
            model.set_parameters(&params)?;
        }
        let vl = validate(&model)?;
        if !vl.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        if vl < best.0 {
            best = (vl, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.set_parameters(&best.1)?;
    model.log = TrainingLog {
        epochs_run,
        best_epoch: best.2,
        best_val_loss: Some(best.0),
        init: "uniform_fan_in".into(),
    };
    Ok(model)
}

impl Classifier for MlpClassifier {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_members: true,
            has_gradients: true,
            has_logits: true,
        }
    }

    fn predict_logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_input(self.n_features, x)?;
        Ok(self.forward(x, None).0)
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.predict_logits(x)?))
    }

    /// MC-dropout members: pass `m` draws the mask of input row `i` from
    /// substream `(seed, m, i)`.
    fn member_proba(&self, x: ArrayView2<f64>, seed: u64) -> Result<Array3<f64>> {
        check_input(self.n_features, x)?;
        let m_count = self.config.mc_samples;
        let mut out = Array3::zeros((m_count, x.nrows(), self.n_classes));
        for m in 0..m_count {
            let masks = self.dropout_masks(x.nrows(), |i| rng::substream(seed, &[m as u64, i as u64]));
            let (logits, _) = self.forward(x, Some(&masks));
            out.index_axis_mut(Axis(0), m).assign(&softmax_rows(&logits));
        }
        Ok(out)
    }

    fn logit_vjp(&self, x: ArrayView1<f64>, upstream: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.n_features || upstream.len() != self.n_classes {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let xm = x.insert_axis(Axis(0));
        let (_, cache) = self.forward(xm, None);
        let d = upstream.insert_axis(Axis(0)).to_owned();
        let (_, dx) = self.backward(d, &cache);
        Ok(dx.row(0).to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gaussian_blobs, xor_dataset};
    use crate::models::accuracy;

    fn small(seed: u64) -> MlpConfig {
        MlpConfig {
            hidden: vec![16, 8],
            max_epochs: 60,
            mc_samples: 10,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialized_network() {
        let ds = gaussian_blobs(50, 3, 3, 2.0, 1).unwrap();
        let cfg = MlpConfig {
            max_epochs: 0,
            ..small(3)
        };
        let m = train_mlp(&ds, &ds, &cfg).unwrap();
        assert_eq!(m, MlpClassifier::init(3, 3, &cfg).unwrap());
        let p = m.predict_proba(ds.features.view()).unwrap();
        for &v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 0.25);
        }
    }

    #[test]
    fn learns_xor() {
        let ds = xor_dataset(60, 0.25, 2).unwrap();
        let val = xor_dataset(20, 0.25, 3).unwrap();
        let cfg = MlpConfig {
            learning_rate: 1e-2,
            ..small(5)
        };
        let m = train_mlp(&ds, &val, &cfg).unwrap();
        let pred = m.predict(val.features.view()).unwrap();
        assert!(accuracy(&val.labels, &pred) > 0.9);
        assert!(m.log.best_epoch >= 1);
    }

    #[test]
    fn eval_mode_is_deterministic_and_consistent() {
        let ds = gaussian_blobs(80, 4, 3, 2.0, 4).unwrap();
        let m = train_mlp(&ds, &ds, &small(6)).unwrap();
        let logits = m.predict_logits(ds.features.view()).unwrap();
        let p = m.predict_proba(ds.features.view()).unwrap();
        assert_eq!(p, softmax_rows(&logits));
        assert_eq!(m, train_mlp(&ds, &ds, &small(6)).unwrap());
    }

    #[test]
    fn mc_members_vary_and_are_reproducible() {
        let ds = gaussian_blobs(30, 4, 2, 2.0, 8).unwrap();
        let m = train_mlp(&ds, &ds, &small(7)).unwrap();
        let a = m.member_proba(ds.features.view(), 11).unwrap();
        let b = m.member_proba(ds.features.view(), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim().0, 10);
        assert!(a.index_axis(Axis(0), 0) != a.index_axis(Axis(0), 1));
    }

    #[test]
    fn no_dropout_members_match_eval() {
        let ds = gaussian_blobs(30, 4, 2, 2.0, 8).unwrap();
        let cfg = MlpConfig {
            dropout: 0.0,
            ..small(1)
        };
        let m = train_mlp(&ds, &ds, &cfg).unwrap();
        let members = m.member_proba(ds.features.view(), 3).unwrap();
        let p = m.predict_proba(ds.features.view()).unwrap();
        for k in 0..members.dim().0 {
            assert_eq!(members.index_axis(Axis(0), k), p);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = MlpClassifier::init(3, 2, &small(0)).unwrap();
        assert!(m.predict_proba(Array2::zeros((2, 4)).view()).is_err());
    }
}
