//! CART classification tree with Gini impurity.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tree node. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training samples per class that reached this leaf (bootstrap
        /// duplicates counted).
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    /// Features examined per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 15,
            max_features: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl DecisionTree {
    /// Build a tree from explicit nodes, checking child indices, feature
    /// range and leaf shape.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize, n_classes: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("tree needs at least one node".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    left,
                    right,
                    threshold,
                } => {
                    if *feature >= n_features
                        || *left <= i
                        || *right <= i
                        || *left >= nodes.len()
                        || *right >= nodes.len()
                        || !threshold.is_finite()
                    {
                        return Err(Error::InvalidInput(format!("malformed split node {i}")));
                    }
                }
                Node::Leaf { counts } => {
                    if counts.len() != n_classes || counts.iter().all(|&c| c == 0) {
                        return Err(Error::InvalidInput(format!("malformed leaf node {i}")));
                    }
                }
            }
        }
        Ok(Self {
            nodes,
            n_features,
            n_classes,
        })
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: ArrayView1<f64>) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    /// Class frequencies of the leaf at node `i`.
    pub fn leaf_value(&self, i: usize) -> Option<Array1<f64>> {
        match &self.nodes[i] {
            Node::Leaf { counts } => {
                let total: u32 = counts.iter().sum();
                Some(counts.iter().map(|&c| c as f64 / total as f64).collect())
            }
            Node::Split { .. } => None,
        }
    }

    /// Frequency of `class` at leaf `i` (0 for split nodes).
    pub fn leaf_class_value(&self, i: usize, class: usize) -> f64 {
        match &self.nodes[i] {
            Node::Leaf { counts } => {
                let total: u32 = counts.iter().sum();
                counts[class] as f64 / total as f64
            }
            Node::Split { .. } => 0.0,
        }
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.leaf_value(self.leaf_index(x)).expect("leaf")
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Fit on the rows listed in `samples` (duplicates allowed).
    pub fn fit(
        x: ArrayView2<f64>,
        labels: &[usize],
        n_classes: usize,
        samples: Vec<usize>,
        config: &TreeConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let d = x.ncols();
        let max_features = config
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d);
        let mut builder = Builder {
            x,
            labels,
            n_classes,
            max_features,
            nodes: Vec::new(),
            scratch: Vec::new(),
        };
        builder.nodes.push(Node::Leaf {
            counts: vec![0; n_classes],
        });
        let mut stack = vec![(0usize, samples, 0usize)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let counts = builder.class_counts(&idx);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if depth >= config.max_depth || pure || idx.len() < config.min_samples_split {
                None
            } else {
                builder.best_split(&idx, &counts, rng)
            };
            match split {
                None => builder.nodes[slot] = Node::Leaf { counts },
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.into_iter().partition(|&s| x[[s, feature]] <= threshold);
                    let left = builder.nodes.len();
                    let right = left + 1;
                    let placeholder = Node::Leaf {
                        counts: vec![0; n_classes],
                    };
                    builder.nodes.push(placeholder.clone());
                    builder.nodes.push(placeholder);
                    builder.nodes[slot] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    // right first so the left subtree is built first
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Ok(Self {
            nodes: builder.nodes,
            n_features: d,
            n_classes,
        })
    }
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    labels: &'a [usize],
    n_classes: usize,
    max_features: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f64, usize)>,
}

impl Builder<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    /// Best Gini split over a random feature subset.
    ///
    /// Features are visited in a random order until `max_features`
    /// non-constant ones have been evaluated. Ties go to the lowest feature
    /// index, then the lowest threshold.
    fn best_split(&mut self, idx: &[usize], counts: &[u32], rng: &mut Rng) -> Option<(usize, f64)> {
        let d = self.x.ncols();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(rng);
        let n = idx.len() as f64;
        let parent: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum::<f64>() / n;

        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        let mut left = vec![0.0f64; self.n_classes];
        for &f in &order {
            if visited >= self.max_features {
                break;
            }
            self.scratch.clear();
            self.scratch
                .extend(idx.iter().map(|&i| (self.x[[i, f]], self.labels[i])));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            if self.scratch[0].0 == self.scratch[self.scratch.len() - 1].0 {
                continue;
            }
            visited += 1;

            left.iter_mut().for_each(|v| *v = 0.0);
            let mut left_sq = 0.0;
            let mut right_sq: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
            let mut right: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            for i in 0..self.scratch.len() - 1 {
                let y = self.scratch[i].1;
                left_sq += 2.0 * left[y] + 1.0;
                left[y] += 1.0;
                right_sq -= 2.0 * right[y] - 1.0;
                right[y] -= 1.0;
                let (v, next) = (self.scratch[i].0, self.scratch[i + 1].0);
                if v == next {
                    continue;
                }
                let nl = (i + 1) as f64;
                let score = left_sq / nl + right_sq / (n - nl) - parent;
                let mut threshold = 0.5 * (v + next);
                if threshold >= next {
                    threshold = v;
                }
                let better = match best {
                    None => true,
                    Some((s, bf, bt)) => {
                        score > s || (score == s && (f < bf || (f == bf && threshold < bt)))
                    }
                };
                if better {
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn pure_node_is_leaf() {
        let x = array![[0.0], [1.0], [2.0]];
        let t = DecisionTree::fit(x.view(), &[1, 1, 1], 2, vec![0, 1, 2], &TreeConfig::default(), &mut rng::rng(0))
            .unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(array![5.0].view()), array![0.0, 1.0]);
    }

    #[test]
    fn threshold_is_midpoint() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let t = DecisionTree::fit(x.view(), &[0, 0, 1, 1], 2, vec![0, 1, 2, 3], &TreeConfig::default(), &mut rng::rng(0))
            .unwrap();
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 1.5);
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn depth_limit_respected() {
        let x = ndarray::Array2::from_shape_fn((64, 1), |(i, _)| i as f64);
        let labels: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let cfg = TreeConfig {
            max_depth: 3,
            ..Default::default()
        };
        let t = DecisionTree::fit(x.view(), &labels, 2, (0..64).collect(), &cfg, &mut rng::rng(1)).unwrap();
        assert!(t.depth() <= 3);
        assert!(t.n_leaves() <= 8);
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // both features separate the classes perfectly
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let cfg = TreeConfig {
            max_features: Some(2),
            ..Default::default()
        };
        for seed in 0..8 {
            let t = DecisionTree::fit(x.view(), &[0, 1], 2, vec![0, 1], &cfg, &mut rng::rng(seed)).unwrap();
            assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
        }
    }

    #[test]
    fn from_nodes_validation() {
        assert!(DecisionTree::from_nodes(vec![Node::Leaf { counts: vec![0, 0] }], 1, 2).is_err());
        let bad = vec![Node::Split {
            feature: 3,
            threshold: 0.0,
            left: 1,
            right: 2,
        }];
        assert!(DecisionTree::from_nodes(bad, 2, 2).is_err());
    }
}
