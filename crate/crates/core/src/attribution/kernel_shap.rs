//! KernelSHAP: Shapley values as a weighted least-squares fit over
//! coalitions.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::shapley::binomial;
use super::{check_len, coalition_values, AttributionMethod, AttributionVector, BackgroundSet, ScalarModel};
use crate::error::{Error, Result};
use crate::linalg::weighted_ridge;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelShapConfig {
    /// Coalition budget; `None` means `2d + 2048`. A budget of at least
    /// `2^d − 2` enumerates every proper coalition.
    pub n_coalitions: Option<usize>,
    pub seed: u64,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        Self {
            n_coalitions: None,
            seed: 0,
        }
    }
}

struct Design {
    masks: Vec<Vec<bool>>,
    weights: Vec<f64>,
}

/// Shapley kernel weight of one coalition of size `s`.
fn kernel_weight(s: usize, d: usize) -> f64 {
    (d - 1) as f64 / (binomial(d, s) * (s * (d - s)) as f64)
}

fn full_design(d: usize) -> Design {
    let n = (1usize << d) - 2;
    let mut masks = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for s in 1..=n {
        let mask: Vec<bool> = (0..d).map(|j| s >> j & 1 == 1).collect();
        weights.push(kernel_weight(s.count_ones() as usize, d));
        masks.push(mask);
    }
    Design { masks, weights }
}

fn for_each_subset(d: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < i + d - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Size-by-size enumeration of the smallest and largest coalitions while
/// the budget covers them, then paired sampling from the remaining kernel
/// mass.
fn sampled_design(d: usize, budget: usize, seed: u64) -> Design {
    let n_sizes = (d - 1).div_ceil(2);
    let n_paired = (d - 1) / 2;
    let mut size_weight: Vec<f64> = (1..=n_sizes)
        .map(|s| (d - 1) as f64 / (s * (d - s)) as f64)
        .collect();
    let total: f64 = size_weight.iter().sum();
    size_weight.iter_mut().for_each(|w| *w /= total);

    let mut masks = Vec::new();
    let mut weights = Vec::new();
    let mut left = budget;
    let mut done = 0;
    let mut remaining = size_weight.clone();
    for s in 1..=n_sizes {
        let paired = s <= n_paired;
        let n_subsets = binomial(d, s) * if paired { 2.0 } else { 1.0 };
        if left as f64 * remaining[s - 1] / n_subsets < 1.0 - 1e-8 {
            break;
        }
        done = s;
        left -= n_subsets as usize;
        let mut w = size_weight[s - 1] / binomial(d, s);
        if paired {
            w /= 2.0;
        }
        for_each_subset(d, s, |idx| {
            let mut m = vec![false; d];
            for &j in idx {
                m[j] = true;
            }
            if paired {
                masks.push(m.iter().map(|b| !b).collect());
                weights.push(w);
            }
            masks.push(m);
            weights.push(w);
        });
        let rest: f64 = remaining[s..].iter().sum();
        if rest > 0.0 {
            for r in remaining[s..].iter_mut() {
                *r /= rest;
            }
        }
    }

    let weight_left: f64 = size_weight[done..].iter().sum();
    if done < n_sizes && left > 0 && weight_left > 0.0 {
        let dist: Vec<f64> = remaining[done..].to_vec();
        let mut rng = rng::rng(seed);
        let mut seen: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut sampled: Vec<(Vec<bool>, f64)> = Vec::new();
        let mut draws = 0;
        let max_draws = left * 100;
        while left > 0 && draws < max_draws {
            draws += 1;
            let u: f64 = rng.random::<f64>() * dist.iter().sum::<f64>();
            let mut acc = 0.0;
            let mut pick = dist.len() - 1;
            for (i, p) in dist.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            let s = done + pick + 1;
            let mut m = vec![false; d];
            for j in sample(&mut rng, d, s) {
                m[j] = true;
            }
            let comp: Vec<bool> = m.iter().map(|b| !b).collect();
            let paired = s <= n_paired;
            for mask in if paired { vec![m, comp] } else { vec![m] } {
                if let Some(&i) = seen.get(&mask) {
                    sampled[i].1 += 1.0;
                } else if left > 0 {
                    seen.insert(mask.clone(), sampled.len());
                    sampled.push((mask, 1.0));
                    left -= 1;
                }
            }
        }
        let total: f64 = sampled.iter().map(|(_, w)| w).sum();
        for (mask, w) in sampled {
            masks.push(mask);
            weights.push(w * weight_left / total);
        }
    }
    Design { masks, weights }
}

/// KernelSHAP attributions of `model` at `x` with the interventional value
/// function over `background`. Efficiency is imposed exactly by
/// eliminating the last feature from the regression.
pub fn kernel_shap(
    model: &dyn ScalarModel,
    x: ArrayView1<f64>,
    background: &BackgroundSet,
    config: &KernelShapConfig,
) -> Result<AttributionVector> {
    let d = model.n_features();
    check_len(d, x.len())?;
    check_len(d, background.n_features())?;
    let fx = model.eval(x.insert_axis(ndarray::Axis(0)))?[0];
    let base = model.eval(background.rows.view())?.iter().sum::<f64>() / background.len() as f64;
    let delta = fx - base;
    let mut evals = 1 + background.len();
    let make = |values: Vec<f64>, evals: usize, stabilized: bool| AttributionVector {
        values,
        target_class: model.target(),
        method: AttributionMethod::KernelShap,
        model_evals: evals,
        mask: None,
        stabilized,
    };
    if d == 1 {
        return Ok(make(vec![delta], evals, false));
    }

    let budget = config.n_coalitions.unwrap_or(2 * d + 2048).max(1);
    let full = d < 31 && budget >= (1usize << d) - 2;
    let design = if full {
        full_design(d)
    } else {
        sampled_design(d, budget, config.seed)
    };
    if design.masks.is_empty() {
        return Err(Error::Degenerate("no coalitions sampled"));
    }
    let v = coalition_values(model, x, background, &design.masks)?;
    evals += design.masks.len() * background.len();

    let n = design.masks.len();
    let mut z = Array2::zeros((n, d - 1));
    let mut y = Array1::zeros(n);
    for (i, mask) in design.masks.iter().enumerate() {
        let last = if mask[d - 1] { 1.0 } else { 0.0 };
        for j in 0..d - 1 {
            z[[i, j]] = f64::from(u8::from(mask[j])) - last;
        }
        y[i] = v[i] - base - last * delta;
    }
    let w = Array1::from(design.weights);
    let fit = weighted_ridge(z.view(), y.view(), w.view(), 0.0, false)
        .ok_or(Error::Degenerate("KernelSHAP regression has no solution"))?;
    let mut phi: Vec<f64> = fit.coef.to_vec();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(make(phi, evals, fit.stabilized))
}

#[cfg(test)]
mod tests {
    use super::super::{exact_shapley_oracle, FnModel};
    use super::*;
    use ndarray::array;

    fn toy() -> (impl ScalarModel, BackgroundSet) {
        let model = FnModel {
            n_features: 5,
            f: |r: ArrayView1<f64>| (r[0] * r[1]).tanh() + r[2].powi(2) - 0.5 * r[3] + r[4].sin() * r[0],
        };
        let bg = BackgroundSet::new(Array2::from_shape_fn((7, 5), |(i, j)| {
            ((i * 5 + j) as f64 * 0.37).sin()
        }))
        .unwrap();
        (model, bg)
    }

    #[test]
    fn subset_enumeration_counts() {
        for (d, k) in [(5, 2), (6, 3), (4, 4), (4, 1)] {
            let mut c = 0;
            for_each_subset(d, k, |_| c += 1);
            assert_eq!(c as f64, binomial(d, k));
        }
    }

    #[test]
    fn full_enumeration_matches_oracle() {
        let (model, bg) = toy();
        let x = array![0.9, -1.2, 0.4, 2.0, -0.3];
        let oracle = exact_shapley_oracle(&model, x.view(), &bg).unwrap();
        let ks = kernel_shap(&model, x.view(), &bg, &KernelShapConfig::default()).unwrap();
        for j in 0..5 {
            assert!((oracle.values[j] - ks.values[j]).abs() < 1e-9);
        }
        assert_eq!(ks.model_evals, 1 + 7 + 30 * 7);
    }

    #[test]
    fn sampled_design_is_efficient_and_close() {
        let (model, bg) = toy();
        let x = array![0.9, -1.2, 0.4, 2.0, -0.3];
        let oracle = exact_shapley_oracle(&model, x.view(), &bg).unwrap();
        let cfg = KernelShapConfig {
            n_coalitions: Some(24),
            seed: 5,
        };
        let ks = kernel_shap(&model, x.view(), &bg, &cfg).unwrap();
        assert!((ks.sum() - oracle.sum()).abs() < 1e-9);
        let err: f64 = (0..5).map(|j| (oracle.values[j] - ks.values[j]).abs()).fold(0.0, f64::max);
        assert!(err < 0.2, "max error {err}");
    }

    #[test]
    fn x_equal_to_background_gives_zero() {
        let (model, _) = toy();
        let x = array![0.1, 0.2, 0.3, 0.4, 0.5];
        let bg = BackgroundSet::new(x.clone().insert_axis(ndarray::Axis(0)).to_owned()).unwrap();
        let ks = kernel_shap(&model, x.view(), &bg, &KernelShapConfig::default()).unwrap();
        assert!(ks.values.iter().all(|v| *v == 0.0));
    }
}
