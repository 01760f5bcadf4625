use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};

/// Per-feature z-score transform fitted on a training split.
///
/// Uses the population standard deviation; constant columns get a scale of
/// 1 so they are only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub fn fit_standardizer(train: &TabularDataset) -> Result<Standardizer> {
    Standardizer::fit(train.features.view())
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                means.push(first);
                stds.push(1.0);
                continue;
            }
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            means.push(mean);
            stds.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Ok(Self { means, stds })
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn inverse(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(z.ncols())?;
        let mut out = z.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }

    /// Standardize the features of a whole dataset.
    pub fn apply_dataset(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        ds.with_features(self.apply(ds.features.view())?)
    }

    fn check(&self, d: usize) -> Result<()> {
        if d != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: d,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn constant_column_maps_to_zero() {
        let x = array![[0.3, 0.0], [0.3, 2.0]];
        let s = Standardizer::fit(x.view()).unwrap();
        let z = s.apply(x.view()).unwrap();
        assert!(z.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(s.stds[0], 1.0);
    }

    #[test]
    fn population_std() {
        let x = array![[0.0], [2.0]];
        let s = Standardizer::fit(x.view()).unwrap();
        assert_eq!(s.means[0], 1.0);
        assert_eq!(s.stds[0], 1.0);
        assert_eq!(s.apply(x.view()).unwrap(), array![[-1.0], [1.0]]);
    }

    #[test]
    fn test_data_does_not_refit() {
        let s = Standardizer::fit(array![[0.0], [2.0]].view()).unwrap();
        let z = s.apply(array![[10.0]].view()).unwrap();
        assert_eq!(z[[0, 0]], 9.0);
    }

    #[test]
    fn empty_fit_fails() {
        assert!(Standardizer::fit(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_and_moments(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..40)) {
            let n = rows.len();
            let x = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
            let s = Standardizer::fit(x.view()).unwrap();
            let z = s.apply(x.view()).unwrap();
            let back = s.inverse(z.view()).unwrap();
            for (a, b) in x.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            }
            for col in z.columns() {
                prop_assert!((col.sum() / n as f64).abs() < 1e-9);
            }
        }
    }
}
