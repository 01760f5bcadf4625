use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Random (unstratified) train/validation/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.70,
            val_frac: 0.15,
            test_frac: 0.15,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidInput("split fractions must be in [0, 1]".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("split fractions must sum to 1".into()));
        }
        Ok(())
    }

    /// `(n_train, n_val, n_test)` for `n` rows.
    ///
    /// The held-out block is `ceil((val + test) * n)` rows, of which the test
    /// part takes `ceil(held * test / (val + test))`; train gets the rest.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let held_frac = self.val_frac + self.test_frac;
        let held = ceil_robust(held_frac * n as f64).min(n);
        let test = if held_frac > 0.0 {
            ceil_robust(held as f64 * self.test_frac / held_frac).min(held)
        } else {
            0
        };
        (n - held, held - test, test)
    }
}

// Products like 0.3 * 3810 land a few ulps above the integer they denote.
fn ceil_robust(v: f64) -> usize {
    (v - 1e-9).ceil().max(0.0) as usize
}

/// Train, validation and test parts of a dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: TabularDataset,
    pub val: TabularDataset,
    pub test: TabularDataset,
    /// Row indices of each part in the source dataset.
    pub indices: [Vec<usize>; 3],
}

pub fn split(ds: &TabularDataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let n = ds.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("cannot split {n} rows into three parts")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(spec.seed));
    let (n_train, n_val, _) = spec.sizes(n);
    let train_idx = order[..n_train].to_vec();
    let val_idx = order[n_train..n_train + n_val].to_vec();
    let test_idx = order[n_train + n_val..].to_vec();
    Ok(Splits {
        train: ds.subset(&train_idx),
        val: ds.subset(&val_idx),
        test: ds.subset(&test_idx),
        indices: [train_idx, val_idx, test_idx],
    })
}
