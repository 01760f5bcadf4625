//! Untargeted BIM, PGD (ℓ∞) and C&W (ℓ2) attacks in feature space.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Bim,
    Pgd,
    Cw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinfConfig {
    pub n_iter: usize,
    /// Start from a uniform point in the ε-ball.
    pub random_start: bool,
}

impl LinfConfig {
    /// Step size `α = 2.5·ε / n_iter`.
    pub fn step(&self, eps: f64) -> f64 {
        2.5 * eps / self.n_iter as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwConfig {
    pub kappa: f64,
    pub n_iter: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub bim: LinfConfig,
    pub pgd: LinfConfig,
    pub cw: CwConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            bim: LinfConfig {
                n_iter: 10,
                random_start: false,
            },
            pgd: LinfConfig {
                n_iter: 20,
                random_start: true,
            },
            cw: CwConfig {
                kappa: 0.0,
                n_iter: 100,
                learning_rate: 0.01,
            },
        }
    }
}

fn check(model: &dyn Classifier, x: ArrayView1<f64>, y: usize) -> Result<()> {
    if !model.capabilities().has_gradients {
        return Err(Error::CapabilityAbsent("input gradients"));
    }
    if x.len() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            found: x.len(),
        });
    }
    if y >= model.n_classes() {
        return Err(Error::InvalidInput(format!("label {y} out of range")));
    }
    Ok(())
}

/// Gradient of the cross-entropy of label `y` with respect to the input.
fn ce_gradient(model: &dyn Classifier, x: ArrayView1<f64>, y: usize) -> Result<Array1<f64>> {
    let mut upstream = model.predict_proba(x.insert_axis(Axis(0)))?.row(0).to_owned();
    upstream[y] -= 1.0;
    model.logit_vjp(x, upstream.view())
}

/// Clamp `v` into `[x − ε, x + ε]` so that the computed `|v − x|` never
/// exceeds `ε`, rounding included.
fn project(v: f64, x: f64, eps: f64) -> f64 {
    let mut v = v.clamp(x - eps, x + eps);
    while v - x > eps {
        v = v.next_down();
    }
    while x - v > eps {
        v = v.next_up();
    }
    v
}

fn linf_attack(
    model: &dyn Classifier,
    x: ArrayView1<f64>,
    y: usize,
    eps: f64,
    cfg: &LinfConfig,
    seed: u64,
) -> Result<Array1<f64>> {
    check(model, x, y)?;
    if eps == 0.0 {
        return Ok(x.to_owned());
    }
    let alpha = cfg.step(eps);
    let mut adv = x.to_owned();
    if cfg.random_start {
        let mut r = rng::rng(seed);
        for j in 0..adv.len() {
            adv[j] = project(adv[j] + r.random_range(-eps..=eps), x[j], eps);
        }
    }
    for _ in 0..cfg.n_iter {
        let g = ce_gradient(model, adv.view(), y)?;
        for j in 0..adv.len() {
            let step = adv[j] + alpha * g[j].signum() * f64::from(u8::from(g[j] != 0.0));
            adv[j] = project(step, x[j], eps);
        }
    }
    Ok(adv)
}

/// Basic iterative method: signed-gradient ascent on the cross-entropy,
/// projected onto the ℓ∞ ball after every step.
pub fn bim_attack(model: &dyn Classifier, x: ArrayView1<f64>, y: usize, eps: f64, cfg: &AttackConfig) -> Result<Array1<f64>> {
    linf_attack(model, x, y, eps, &cfg.bim, 0)
}

/// BIM from a uniform random start inside the ball (single restart).
pub fn pgd_attack(
    model: &dyn Classifier,
    x: ArrayView1<f64>,
    y: usize,
    eps: f64,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Array1<f64>> {
    linf_attack(model, x, y, eps, &cfg.pgd, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CwResult {
    pub adversarial: Array1<f64>,
    pub l2: f64,
    /// Best objective value after each iteration (index 0 is `δ = 0`).
    pub best_objective: Vec<f64>,
}

/// Untargeted C&W ℓ2 attack: Adam on
/// `‖δ‖² + c·max(Z_y − max_{j≠y} Z_j, −κ)`, returning the lowest-objective
/// iterate.
pub fn cw_attack(model: &dyn Classifier, x: ArrayView1<f64>, y: usize, c: f64, cfg: &CwConfig) -> Result<CwResult> {
    check(model, x, y)?;
    let d = x.len();
    let k = model.n_classes();
    let objective = |delta: &Array1<f64>| -> Result<(f64, Array1<f64>)> {
        let point = &x + delta;
        let z = model.predict_logits(point.view().insert_axis(Axis(0)))?.row(0).to_owned();
        let (other, _) = (0..k)
            .filter(|&j| j != y)
            .map(|j| (j, z[j]))
            .fold((usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let margin = z[y] - z[other];
        let norm2 = delta.dot(delta);
        let mut grad = delta * 2.0;
        if c != 0.0 && margin > -cfg.kappa {
            let mut up = Array1::zeros(k);
            up[y] = c;
            up[other] = -c;
            grad += &model.logit_vjp(point.view(), up.view())?;
        }
        Ok((norm2 + c * margin.max(-cfg.kappa), grad))
    };

    let mut delta = Array1::<f64>::zeros(d);
    let (mut m, mut v) = (Array1::<f64>::zeros(d), Array1::<f64>::zeros(d));
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let (f0, mut grad) = objective(&delta)?;
    let mut best = (f0, delta.clone());
    let mut trace = vec![f0];
    for t in 1..=cfg.n_iter {
        m = &m * b1 + &grad * (1.0 - b1);
        v = &v * b2 + &grad.mapv(|g| g * g) * (1.0 - b2);
        let mhat = &m / (1.0 - b1.powi(t as i32));
        let vhat = &v / (1.0 - b2.powi(t as i32));
        delta = &delta - &(mhat * cfg.learning_rate / (vhat.mapv(f64::sqrt) + eps));
        let (f, g) = objective(&delta)?;
        grad = g;
        if f < best.0 {
            best = (f, delta.clone());
        }
        trace.push(best.0);
    }
    let l2 = best.1.dot(&best.1).sqrt();
    Ok(CwResult {
        adversarial: &x + &best.1,
        l2,
        best_objective: trace,
    })
}

/// Attack every row of `x` in parallel. Labels default to the model's
/// predictions; PGD row `i` uses substream `(seed, i)`. Returns the
/// adversarial batch and, for C&W, the achieved ℓ2 per row.
pub fn attack_batch(
    model: &dyn Classifier,
    x: ArrayView2<f64>,
    labels: Option<&[usize]>,
    kind: AttackKind,
    level: f64,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<(Array2<f64>, Option<Vec<f64>>)> {
    let labels = match labels {
        Some(l) => {
            if l.len() != x.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: x.nrows(),
                    found: l.len(),
                });
            }
            l.to_vec()
        }
        None => model.predict(x)?,
    };
    let rows: Vec<Result<(Array1<f64>, f64)>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            match kind {
                AttackKind::Bim => Ok((bim_attack(model, xi, labels[i], level, cfg)?, 0.0)),
                AttackKind::Pgd => {
                    let s = rng::substream_seed(seed, &[i as u64]);
                    Ok((pgd_attack(model, xi, labels[i], level, cfg, s)?, 0.0))
                }
                AttackKind::Cw => {
                    let r = cw_attack(model, xi, labels[i], level, &cfg.cw)?;
                    Ok((r.adversarial, r.l2))
                }
            }
        })
        .collect();
    let mut out = Array2::zeros(x.raw_dim());
    let mut l2 = Vec::with_capacity(x.nrows());
    for (i, r) in rows.into_iter().enumerate() {
        let (adv, dist) = r?;
        out.row_mut(i).assign(&adv);
        l2.push(dist);
    }
    Ok((out, (kind == AttackKind::Cw).then_some(l2)))
}
