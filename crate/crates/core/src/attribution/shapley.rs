//! Exact Shapley values by coalition enumeration.

use ndarray::ArrayView1;

use super::{check_len, coalition_values, AttributionMethod, AttributionVector, BackgroundSet, ScalarModel};
use crate::error::{Error, Result};

/// Largest feature count the enumeration oracle accepts.
pub const MAX_ORACLE_FEATURES: usize = 16;

/// `|S|! (d − |S| − 1)! / d!` for a coalition of size `s` out of `d` players.
pub fn shapley_weight(s: usize, d: usize) -> f64 {
    1.0 / (d as f64 * binomial(d - 1, s))
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// Shapley values of `model` at `x` under the interventional value
/// function, computed from all `2^d` coalitions.
pub fn exact_shapley_oracle(
    model: &dyn ScalarModel,
    x: ArrayView1<f64>,
    background: &BackgroundSet,
) -> Result<AttributionVector> {
    let d = model.n_features();
    check_len(d, x.len())?;
    check_len(d, background.n_features())?;
    if d > MAX_ORACLE_FEATURES {
        return Err(Error::InvalidInput(format!(
            "exact Shapley enumeration supports at most {MAX_ORACLE_FEATURES} features, got {d}"
        )));
    }
    let n_sets = 1usize << d;
    let masks: Vec<Vec<bool>> = (0..n_sets)
        .map(|s| (0..d).map(|j| s >> j & 1 == 1).collect())
        .collect();
    let v = coalition_values(model, x, background, &masks)?;
    let weights: Vec<f64> = (0..d).map(|s| shapley_weight(s, d)).collect();
    let mut phi = vec![0.0; d];
    for s in 0..n_sets {
        let size = s.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                *p += weights[size] * (v[s | 1 << i] - v[s]);
            }
        }
    }
    Ok(AttributionVector {
        values: phi,
        target_class: model.target(),
        method: AttributionMethod::ExactShapley,
        model_evals: n_sets * background.len(),
        mask: None,
        stabilized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::super::FnModel;
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn weights_sum_to_one_per_player() {
        for d in 1..10 {
            let total: f64 = (0..d).map(|s| binomial(d - 1, s) * shapley_weight(s, d)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_model_closed_form() {
        let w = [1.5, -2.0, 0.25];
        let model = FnModel {
            n_features: 3,
            f: |r: ArrayView1<f64>| 0.3 + w[0] * r[0] + w[1] * r[1] + w[2] * r[2],
        };
        let bg = BackgroundSet::new(array![[0.0, 1.0, 2.0], [2.0, -1.0, 0.0]]).unwrap();
        let x = array![1.0, 3.0, -1.0];
        let phi = exact_shapley_oracle(&model, x.view(), &bg).unwrap();
        for j in 0..3 {
            let mean = bg.rows.column(j).mean().unwrap();
            assert!((phi.values[j] - w[j] * (x[j] - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn interaction_is_split_evenly() {
        let model = FnModel {
            n_features: 2,
            f: |r: ArrayView1<f64>| r[0] * r[1],
        };
        let bg = BackgroundSet::new(Array2::zeros((1, 2))).unwrap();
        let phi = exact_shapley_oracle(&model, array![2.0, 3.0].view(), &bg).unwrap();
        assert_eq!(phi.values, vec![3.0, 3.0]);
    }

    #[test]
    fn too_many_features_rejected() {
        let model = FnModel {
            n_features: 17,
            f: |_: ArrayView1<f64>| 0.0,
        };
        let bg = BackgroundSet::new(Array2::zeros((1, 17))).unwrap();
        let x = ndarray::Array1::zeros(17);
        assert!(exact_shapley_oracle(&model, x.view(), &bg).is_err());
    }
}
