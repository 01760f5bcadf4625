//! Interventional Shapley values for random forests.
//!
//! For one tree and one reference row `z`, the game "predict at the hybrid
//! of `x` on S and `z` elsewhere" only depends on the features where `x`
//! and `z` go different ways at some split. Walking the tree with the set
//! A of features fixed to `x` and B fixed to `z`, each leaf contributes
//! `v·(|A|−1)!|B|!/(|A|+|B|)!` to every feature in A and the negative
//! `v·|A|!(|B|−1)!/(|A|+|B|)!` to every feature in B. References that
//! follow identical paths are walked together.

use ndarray::ArrayView1;

use super::shapley::binomial;
use super::{check_len, AttributionMethod, AttributionVector, BackgroundSet};
use crate::error::{Error, Result};
use crate::models::{DecisionTree, Node, RandomForest};

#[derive(Clone, Copy, PartialEq)]
enum State {
    Free,
    FromX,
    FromRef,
}

struct Walk<'a> {
    tree: &'a DecisionTree,
    x: ArrayView1<'a, f64>,
    background: &'a BackgroundSet,
    target: usize,
    state: Vec<State>,
    path: Vec<usize>,
    n_a: usize,
    n_b: usize,
    phi: &'a mut [f64],
}

/// `(a−1)! b! / (a+b)!`
fn pos_weight(a: usize, b: usize) -> f64 {
    1.0 / (a as f64 * binomial(a + b, a))
}

/// `a! (b−1)! / (a+b)!`
fn neg_weight(a: usize, b: usize) -> f64 {
    1.0 / (b as f64 * binomial(a + b, b))
}

fn partition(refs: &mut [usize], mut keep_left: impl FnMut(usize) -> bool) -> usize {
    let mut mid = 0;
    for i in 0..refs.len() {
        if keep_left(refs[i]) {
            refs.swap(i, mid);
            mid += 1;
        }
    }
    mid
}

impl Walk<'_> {
    fn visit(&mut self, node: usize, refs: &mut [usize]) {
        if refs.is_empty() {
            return;
        }
        match self.tree.nodes[node] {
            Node::Leaf { .. } => {
                let v = self.tree.leaf_class_value(node, self.target) * refs.len() as f64;
                if v == 0.0 {
                    return;
                }
                let (a, b) = (self.n_a, self.n_b);
                let wp = if a > 0 { v * pos_weight(a, b) } else { 0.0 };
                let wn = if b > 0 { v * neg_weight(a, b) } else { 0.0 };
                for &f in &self.path {
                    match self.state[f] {
                        State::FromX => self.phi[f] += wp,
                        State::FromRef => self.phi[f] -= wn,
                        State::Free => {}
                    }
                }
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let x_left = self.x[feature] <= threshold;
                let (x_child, other) = if x_left { (left, right) } else { (right, left) };
                let rows = &self.background.rows;
                match self.state[feature] {
                    State::FromX => self.visit(x_child, refs),
                    State::FromRef => {
                        let mid = partition(refs, |r| rows[[r, feature]] <= threshold);
                        let (l, r) = refs.split_at_mut(mid);
                        self.visit(left, l);
                        self.visit(right, r);
                    }
                    State::Free => {
                        let mid = partition(refs, |r| (rows[[r, feature]] <= threshold) == x_left);
                        let (same, diff) = refs.split_at_mut(mid);
                        self.visit(x_child, same);
                        if diff.is_empty() {
                            return;
                        }
                        self.path.push(feature);
                        self.state[feature] = State::FromX;
                        self.n_a += 1;
                        self.visit(x_child, diff);
                        self.state[feature] = State::FromRef;
                        self.n_a -= 1;
                        self.n_b += 1;
                        self.visit(other, diff);
                        self.state[feature] = State::Free;
                        self.n_b -= 1;
                        self.path.pop();
                    }
                }
            }
        }
    }
}

/// Exact interventional Shapley values of the forest's probability for
/// class `target` at `x`. Cost is polynomial in tree size and background
/// size; `model_evals` counts tree–reference pairs.
pub fn tree_shap(
    forest: &RandomForest,
    x: ArrayView1<f64>,
    background: &BackgroundSet,
    target: usize,
) -> Result<AttributionVector> {
    let d = forest.n_features;
    check_len(d, x.len())?;
    check_len(d, background.n_features())?;
    if target >= forest.n_classes {
        return Err(Error::InvalidInput(format!("target class {target} out of range")));
    }
    let mut phi = vec![0.0; d];
    let mut refs: Vec<usize> = (0..background.len()).collect();
    for tree in &forest.trees {
        let mut walk = Walk {
            tree,
            x,
            background,
            target,
            state: vec![State::Free; d],
            path: Vec::new(),
            n_a: 0,
            n_b: 0,
            phi: &mut phi,
        };
        walk.visit(0, &mut refs);
    }
    let scale = (forest.n_trees() * background.len()) as f64;
    phi.iter_mut().for_each(|p| *p /= scale);
    Ok(AttributionVector {
        values: phi,
        target_class: target,
        method: AttributionMethod::TreeShap,
        model_evals: forest.n_trees() * background.len(),
        mask: None,
        stabilized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{exact_shapley_oracle, ClassOutput};
    use super::*;
    use ndarray::{array, Array2};

    fn stump(feature: usize, d: usize) -> DecisionTree {
        DecisionTree::from_nodes(
            vec![
                Node::Split {
                    feature,
                    threshold: 0.0,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { counts: vec![3, 1] },
                Node::Leaf { counts: vec![0, 4] },
            ],
            d,
            2,
        )
        .unwrap()
    }

    #[test]
    fn stump_puts_all_mass_on_its_feature() {
        let forest = RandomForest::from_trees(vec![stump(2, 4)]).unwrap();
        let bg = BackgroundSet::new(array![[0.0, 0.0, -1.0, 0.0], [1.0, 1.0, 1.0, 1.0]]).unwrap();
        let x = array![5.0, -5.0, 2.0, 0.0];
        let phi = tree_shap(&forest, x.view(), &bg, 1).unwrap();
        assert_eq!(phi.values[0], 0.0);
        assert_eq!(phi.values[1], 0.0);
        assert_eq!(phi.values[3], 0.0);
        assert!((phi.values[2] - (1.0 - 0.625)).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_fixed_forest() {
        let t = DecisionTree::from_nodes(
            vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
                Node::Split { feature: 1, threshold: 0.0, left: 3, right: 4 },
                Node::Split { feature: 0, threshold: 1.5, left: 5, right: 6 },
                Node::Leaf { counts: vec![1, 0] },
                Node::Leaf { counts: vec![1, 1] },
                Node::Leaf { counts: vec![1, 3] },
                Node::Leaf { counts: vec![0, 2] },
            ],
            3,
            2,
        )
        .unwrap();
        let forest = RandomForest::from_trees(vec![t, stump(2, 3)]).unwrap();
        let bg = BackgroundSet::new(Array2::from_shape_fn((6, 3), |(i, j)| {
            ((i * 3 + j) as f64 * 1.3).sin() * 2.0
        }))
        .unwrap();
        let x = array![1.0, -0.4, 0.7];
        let out = ClassOutput::probability(&forest, 1).unwrap();
        let oracle = exact_shapley_oracle(&out, x.view(), &bg).unwrap();
        let fast = tree_shap(&forest, x.view(), &bg, 1).unwrap();
        for j in 0..3 {
            assert!((oracle.values[j] - fast.values[j]).abs() < 1e-12);
        }
    }
}
