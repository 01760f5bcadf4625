//! Gradient attributions on a target logit.

use ndarray::{Array1, ArrayView1};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_len, AttributionMethod, AttributionVector};
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgConfig {
    pub steps: usize,
    /// Path start; `None` is the zero vector.
    #[serde(default)]
    pub baseline: Option<Vec<f64>>,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            baseline: None,
        }
    }
}

/// Plain input gradient of the target logit.
pub fn vanilla_gradient(model: &dyn Classifier, x: ArrayView1<f64>, target: usize) -> Result<AttributionVector> {
    check_len(model.n_features(), x.len())?;
    let g = model.input_gradient(x, target)?;
    Ok(AttributionVector {
        values: super::to_vec(g),
        target_class: target,
        method: AttributionMethod::Smoothgrad,
        model_evals: 1,
        mask: None,
        stabilized: false,
    })
}

/// Integrated gradients along the straight path from the baseline to `x`,
/// midpoint rule with `steps` gradient evaluations.
pub fn integrated_gradients(
    model: &dyn Classifier,
    x: ArrayView1<f64>,
    config: &IgConfig,
    target: usize,
) -> Result<AttributionVector> {
    let d = model.n_features();
    check_len(d, x.len())?;
    if config.steps == 0 {
        return Err(Error::InvalidInput("integrated gradients needs at least one step".into()));
    }
    let baseline = match &config.baseline {
        Some(b) => {
            check_len(d, b.len())?;
            Array1::from(b.clone())
        }
        None => Array1::zeros(d),
    };
    let diff = &x - &baseline;
    let mut total = Array1::<f64>::zeros(d);
    for k in 0..config.steps {
        let alpha = (k as f64 + 0.5) / config.steps as f64;
        let point = &baseline + &(&diff * alpha);
        total += &model.input_gradient(point.view(), target)?;
    }
    let phi = diff * total / config.steps as f64;
    Ok(AttributionVector {
        values: super::to_vec(phi),
        target_class: target,
        method: AttributionMethod::Ig,
        model_evals: config.steps,
        mask: None,
        stabilized: false,
    })
}

/// Base attribution for [`smooth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SmoothBase {
    VanillaGradient,
    IntegratedGradients(IgConfig),
}

/// Mean of the base attribution over `n_noise` inputs `x + σε`,
/// `ε ~ N(0, I)` drawn from `seed`.
pub fn smooth(
    base: SmoothBase,
    model: &dyn Classifier,
    x: ArrayView1<f64>,
    target: usize,
    n_noise: usize,
    sigma: f64,
    seed: u64,
) -> Result<AttributionVector> {
    let d = model.n_features();
    check_len(d, x.len())?;
    if n_noise == 0 {
        return Err(Error::InvalidInput("smoothing needs at least one noise draw".into()));
    }
    let method = match base {
        SmoothBase::VanillaGradient => AttributionMethod::Smoothgrad,
        SmoothBase::IntegratedGradients(_) => AttributionMethod::SmoothIg,
    };
    let run = |point: ArrayView1<f64>| match &base {
        SmoothBase::VanillaGradient => vanilla_gradient(model, point, target),
        SmoothBase::IntegratedGradients(cfg) => integrated_gradients(model, point, cfg, target),
    };
    if sigma == 0.0 {
        let one = run(x)?;
        return Ok(AttributionVector {
            method,
            model_evals: one.model_evals * n_noise,
            ..one
        });
    }
    let mut rng = rng::rng(seed);
    let mut total = Array1::<f64>::zeros(d);
    let mut evals = 0;
    for _ in 0..n_noise {
        let noisy: Array1<f64> = x.map(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + sigma * e
        });
        let a = run(noisy.view())?;
        evals += a.model_evals;
        total += &Array1::from(a.values);
    }
    Ok(AttributionVector {
        values: super::to_vec(total / n_noise as f64),
        target_class: target,
        method,
        model_evals: evals,
        mask: None,
        stabilized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearClassifier;
    use ndarray::array;

    fn linear() -> LinearClassifier {
        LinearClassifier::new(
            array![[1.0, -2.0, 0.5], [0.3, 0.0, -1.0], [-0.7, 1.1, 0.2]],
            array![0.1, -0.2, 0.3],
            3,
        )
        .unwrap()
    }

    #[test]
    fn ig_on_linear_logit_is_exact() {
        let m = linear();
        let x = array![0.5, 1.5, -2.0];
        for steps in [1, 7, 50] {
            let cfg = IgConfig { steps, baseline: None };
            let phi = integrated_gradients(&m, x.view(), &cfg, 2).unwrap();
            for j in 0..3 {
                assert!((phi.values[j] - m.weights[[2, j]] * x[j]).abs() < 1e-12);
            }
            assert_eq!(phi.model_evals, steps);
        }
    }

    #[test]
    fn ig_at_baseline_is_zero() {
        let m = linear();
        let cfg = IgConfig {
            steps: 10,
            baseline: Some(vec![1.0, 2.0, 3.0]),
        };
        let phi = integrated_gradients(&m, array![1.0, 2.0, 3.0].view(), &cfg, 0).unwrap();
        assert!(phi.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothing_linear_gradient_is_invariant() {
        let m = linear();
        let x = array![0.5, 1.5, -2.0];
        let sg = smooth(SmoothBase::VanillaGradient, &m, x.view(), 1, 20, 0.1, 3).unwrap();
        for j in 0..3 {
            assert!((sg.values[j] - m.weights[[1, j]]).abs() < 1e-12);
        }
        assert_eq!(sg.model_evals, 20);
    }

    #[test]
    fn zero_sigma_is_base_and_seed_is_deterministic() {
        let m = linear();
        let x = array![0.5, 1.5, -2.0];
        let base = integrated_gradients(&m, x.view(), &IgConfig::default(), 0).unwrap();
        let s0 = smooth(
            SmoothBase::IntegratedGradients(IgConfig::default()),
            &m,
            x.view(),
            0,
            50,
            0.0,
            1,
        )
        .unwrap();
        assert_eq!(s0.values, base.values);
        let a = smooth(SmoothBase::IntegratedGradients(IgConfig::default()), &m, x.view(), 0, 5, 0.1, 9).unwrap();
        let b = smooth(SmoothBase::IntegratedGradients(IgConfig::default()), &m, x.view(), 0, 5, 0.1, 9).unwrap();
        assert_eq!(a, b);
    }
}
