//! Bagged random forest; tree disagreement doubles as the epistemic signal.

use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeConfig};
use super::{check_input, Capabilities, Classifier};
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeConfig::default(),
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    /// Seed of each tree's resampling/feature stream.
    pub tree_seeds: Vec<u64>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl RandomForest {
    pub fn from_trees(trees: Vec<DecisionTree>) -> Result<Self> {
        let first = trees
            .first()
            .ok_or_else(|| Error::InvalidInput("forest needs at least one tree".into()))?;
        let (d, k) = (first.n_features, first.n_classes);
        if trees.iter().any(|t| t.n_features != d || t.n_classes != k) {
            return Err(Error::InvalidInput("trees disagree on feature or class count".into()));
        }
        Ok(Self {
            tree_seeds: vec![0; trees.len()],
            trees,
            n_features: d,
            n_classes: k,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

/// Fit `n_trees` trees, each on its own bootstrap resample with per-split
/// feature subsampling. Trees are built in parallel; each uses an RNG
/// substream keyed by its index so the result does not depend on scheduling.
pub fn train_random_forest(train: &TabularDataset, config: &ForestConfig) -> Result<RandomForest> {
    let n = train.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidInput("forest needs at least one tree".into()));
    }
    let x = train.features.view();
    let seeds: Vec<u64> = (0..config.n_trees)
        .map(|t| rng::substream_seed(config.seed, &[t as u64]))
        .collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut r = rng::rng(s);
            let samples: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree::fit(x, &train.labels, train.n_classes(), samples, &config.tree, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        trees,
        tree_seeds: seeds,
        n_features: train.n_features(),
        n_classes: train.n_classes(),
    })
}

impl Classifier for RandomForest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_members: true,
            has_gradients: false,
            has_logits: false,
        }
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_input(self.n_features, x)?;
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for tree in &self.trees {
            for (i, row) in x.rows().into_iter().enumerate() {
                let leaf = tree.leaf_index(row);
                for k in 0..self.n_classes {
                    out[[i, k]] += tree.leaf_class_value(leaf, k);
                }
            }
        }
        out /= self.trees.len() as f64;
        Ok(out)
    }

    fn member_proba(&self, x: ArrayView2<f64>, _seed: u64) -> Result<Array3<f64>> {
        check_input(self.n_features, x)?;
        let mut out = Array3::zeros((self.trees.len(), x.nrows(), self.n_classes));
        for (m, tree) in self.trees.iter().enumerate() {
            for (i, row) in x.rows().into_iter().enumerate() {
                let leaf = tree.leaf_index(row);
                for k in 0..self.n_classes {
                    out[[m, i, k]] = tree.leaf_class_value(leaf, k);
                }
            }
        }
        Ok(out)
    }
}
