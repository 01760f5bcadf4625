use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{DatasetSchema, TabularDataset};
use crate::error::{Error, Result};
use crate::rng;

/// Linearly labelled synthetic data together with the generating weights.
#[derive(Debug, Clone)]
pub struct SyntheticLinear {
    pub dataset: TabularDataset,
    pub weights: Vec<f64>,
}

/// Standard-normal features, label `1` iff `sigmoid(w·x) > 0.5`.
pub fn synth_linear_dataset(d: usize, n: usize, w: &[f64], seed: u64) -> Result<SyntheticLinear> {
    if d == 0 {
        return Err(Error::InvalidInput("d must be at least 1".into()));
    }
    if w.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: w.len(),
        });
    }
    let mut r = rng::rng(seed);
    let x = Array2::from_shape_simple_fn((n, d), || r.sample::<f64, _>(StandardNormal));
    let labels = x
        .rows()
        .into_iter()
        .map(|row| {
            let z: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
            usize::from(1.0 / (1.0 + (-z).exp()) > 0.5)
        })
        .collect();
    let schema = DatasetSchema::anonymous("synthetic_linear", d, 2)?;
    Ok(SyntheticLinear {
        dataset: TabularDataset::new(x, labels, schema)?,
        weights: w.to_vec(),
    })
}

/// Two-dimensional XOR: four Gaussian clusters at `(±1, ±1)` with label
/// `1` when the signs differ.
pub fn xor_dataset(n_per_cluster: usize, spread: f64, seed: u64) -> Result<TabularDataset> {
    let mut r = rng::rng(seed);
    let centers = [(1.0, 1.0, 0), (-1.0, -1.0, 0), (1.0, -1.0, 1), (-1.0, 1.0, 1)];
    let mut x = Array2::zeros((4 * n_per_cluster, 2));
    let mut labels = Vec::with_capacity(4 * n_per_cluster);
    for (c, &(cx, cy, y)) in centers.iter().enumerate() {
        for i in 0..n_per_cluster {
            let row = c * n_per_cluster + i;
            x[[row, 0]] = cx + spread * r.sample::<f64, _>(StandardNormal);
            x[[row, 1]] = cy + spread * r.sample::<f64, _>(StandardNormal);
            labels.push(y);
        }
    }
    TabularDataset::new(x, labels, DatasetSchema::anonymous("xor", 2, 2)?)
}

/// Isotropic Gaussian clusters, one per class, with centers drawn from
/// `N(0, separation² I)`. Useful as a stand-in tabular benchmark.
pub fn gaussian_blobs(
    n: usize,
    d: usize,
    n_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<TabularDataset> {
    let mut r = rng::rng(seed);
    let centers = Array2::from_shape_simple_fn((n_classes, d), || {
        separation * r.sample::<f64, _>(StandardNormal)
    });
    let mut x = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = r.random_range(0..n_classes);
        for j in 0..d {
            x[[i, j]] = centers[[y, j]] + r.sample::<f64, _>(StandardNormal);
        }
        labels.push(y);
    }
    TabularDataset::new(x, labels, DatasetSchema::anonymous("blobs", d, n_classes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_constant_labels() {
        let s = synth_linear_dataset(3, 50, &[0.0; 3], 1).unwrap();
        assert!(s.dataset.labels.iter().all(|&y| y == 0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = synth_linear_dataset(4, 30, &[1.0, -2.0, 0.5, 0.0], 11).unwrap();
        let b = synth_linear_dataset(4, 30, &[1.0, -2.0, 0.5, 0.0], 11).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.weights, vec![1.0, -2.0, 0.5, 0.0]);
    }

    #[test]
    fn rejects_zero_dimension() {
        assert!(synth_linear_dataset(0, 10, &[], 0).is_err());
    }

    #[test]
    fn labels_follow_first_feature_sign() {
        let s = synth_linear_dataset(2, 200, &[3.0, 0.0], 5).unwrap();
        for (row, &y) in s.dataset.features.rows().into_iter().zip(&s.dataset.labels) {
            assert_eq!(y, usize::from(row[0] > 0.0));
        }
    }
}
