//! LIME for tabular inputs: a locally weighted ridge surrogate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_len, AttributionMethod, AttributionVector, ScalarModel};
use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::linalg::weighted_ridge;
use crate::rng;

/// Per-feature training means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl TrainStats {
    pub fn from_data(x: ArrayView2<f64>) -> Self {
        let means = x.mean_axis(ndarray::Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
        let stds = crate::data::column_std(&x.to_owned());
        Self { means, stds }
    }

    pub fn from_standardizer(s: &Standardizer) -> Self {
        Self {
            means: s.means.clone(),
            stds: s.stds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    pub top_k: usize,
    /// Kernel width on standardized features; `None` means `0.75·√d`.
    pub kernel_width: Option<f64>,
    pub ridge_alpha: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            top_k: 10,
            kernel_width: None,
            ridge_alpha: 1.0,
            seed: 0,
        }
    }
}

/// Perturb `x` with Gaussian noise scaled by the training stds, weight the
/// samples by `exp(−dist²/σ²)` (Euclidean distance in standardized units)
/// and fit a ridge model on standardized features. The first sample is `x`
/// itself. Coefficients outside the `top_k` largest magnitudes are zeroed.
pub fn lime(
    model: &dyn ScalarModel,
    x: ArrayView1<f64>,
    stats: &TrainStats,
    config: &LimeConfig,
) -> Result<AttributionVector> {
    let d = model.n_features();
    check_len(d, x.len())?;
    check_len(d, stats.stds.len())?;
    check_len(d, stats.means.len())?;
    if config.n_samples < 2 || stats.stds.iter().all(|&s| !(s > 0.0)) {
        return Err(Error::Degenerate("LIME perturbations are all identical"));
    }
    let n = config.n_samples;
    let width = config.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    let mut rng = rng::rng(config.seed);
    let mut raw = Array2::zeros((n, d));
    let mut scaled = Array2::zeros((n, d));
    let mut weights = Array1::zeros(n);
    for i in 0..n {
        let mut dist2 = 0.0;
        for j in 0..d {
            let s = stats.stds[j];
            let eps: f64 = if i == 0 { 0.0 } else { StandardNormal.sample(&mut rng) };
            let (z, e) = if s > 0.0 { (x[j] + eps * s, eps) } else { (x[j], 0.0) };
            raw[[i, j]] = z;
            scaled[[i, j]] = if s > 0.0 { (z - stats.means[j]) / s } else { 0.0 };
            dist2 += e * e;
        }
        weights[i] = (-dist2 / (width * width)).exp();
    }
    let y = Array1::from(model.eval(raw.view())?);
    let fit = weighted_ridge(scaled.view(), y.view(), weights.view(), config.ridge_alpha, true)
        .ok_or(Error::Degenerate("LIME regression has no solution"))?;
    let mut values = fit.coef.to_vec();
    let mask = if config.top_k < d {
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
        let mut mask = vec![false; d];
        for &j in &order[..config.top_k] {
            mask[j] = true;
        }
        for j in 0..d {
            if !mask[j] {
                values[j] = 0.0;
            }
        }
        Some(mask)
    } else {
        None
    };
    Ok(AttributionVector {
        values,
        target_class: model.target(),
        method: AttributionMethod::Lime,
        model_evals: n,
        mask,
        stabilized: fit.stabilized,
    })
}

#[cfg(test)]
mod tests {
    use super::super::FnModel;
    use super::*;
    use ndarray::array;

    fn stats(d: usize) -> TrainStats {
        TrainStats {
            means: vec![0.0; d],
            stds: (0..d).map(|j| 1.0 + j as f64 * 0.5).collect(),
        }
    }

    #[test]
    fn constant_model_gives_zero() {
        let model = FnModel {
            n_features: 3,
            f: |_: ArrayView1<f64>| 0.42,
        };
        let phi = lime(&model, array![1.0, 2.0, 3.0].view(), &stats(3), &LimeConfig::default()).unwrap();
        assert!(phi.values.iter().all(|v| v.abs() < 1e-6));
        assert_eq!(phi.model_evals, 5000);
        assert!(phi.mask.is_none());
    }

    #[test]
    fn linear_model_scaled_coefficients() {
        let w = [2.0, -1.0, 0.5];
        let model = FnModel {
            n_features: 3,
            f: |r: ArrayView1<f64>| w[0] * r[0] + w[1] * r[1] + w[2] * r[2],
        };
        let st = stats(3);
        let phi = lime(&model, array![0.3, -0.2, 1.0].view(), &st, &LimeConfig::default()).unwrap();
        for j in 0..3 {
            let want = w[j] * st.stds[j];
            assert!((phi.values[j] - want).abs() < 0.01 * want.abs().max(1.0), "{j}: {}", phi.values[j]);
        }
    }

    #[test]
    fn top_k_mask_zeroes_the_rest() {
        let model = FnModel {
            n_features: 12,
            f: |r: ArrayView1<f64>| r.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum(),
        };
        let st = TrainStats {
            means: vec![0.0; 12],
            stds: vec![1.0; 12],
        };
        let phi = lime(&model, ndarray::Array1::zeros(12).view(), &st, &LimeConfig::default()).unwrap();
        let mask = phi.mask.unwrap();
        assert!(!mask[0] && !mask[1] && mask[2..].iter().all(|&m| m));
        assert_eq!(phi.values[0], 0.0);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let model = FnModel {
            n_features: 2,
            f: |r: ArrayView1<f64>| r[0],
        };
        let st = TrainStats {
            means: vec![0.0; 2],
            stds: vec![0.0; 2],
        };
        assert!(lime(&model, array![1.0, 1.0].view(), &st, &LimeConfig::default()).is_err());
    }
}
