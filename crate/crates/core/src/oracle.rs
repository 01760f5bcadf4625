//! Brute-force checks of the exact algorithms against independent
//! references: coalition enumeration, finite differences and pair
//! counting.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attribution::{
    exact_shapley_oracle, integrated_gradients, kernel_shap, tree_shap, AttributionVector, BackgroundSet, ClassOutput,
    IgConfig, KernelShapConfig,
};
use crate::data::gaussian_blobs;
use crate::error::Result;
use crate::models::{
    train_mlp, Classifier, DecisionTree, LinearClassifier, MlpClassifier, MlpConfig, Node, RandomForest,
};
use crate::perturbation::{bim_attack, cw_attack, pgd_attack, AttackConfig};
use crate::rng::{self, Rng};
use crate::stability::{epistemic_growth, kendall_tau, spearman_rho, xec, SweepCurve};

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub trials: usize,
    /// Largest error seen, in the check's own metric.
    pub max_error: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub detail: String,
}

impl OracleCheck {
    fn new(name: &str, trials: usize, max_error: f64, tolerance: f64, start: Instant, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed: max_error <= tolerance,
            trials,
            max_error,
            tolerance,
            seconds: start.elapsed().as_secs_f64(),
            detail,
        }
    }

    fn failed(name: &str, start: Instant, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            trials: 0,
            max_error: f64::INFINITY,
            tolerance: 0.0,
            seconds: start.elapsed().as_secs_f64(),
            detail,
        }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {}: max error {:.3e} (tolerance {:.1e}, {} trials, {:.1}s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            self.tolerance,
            self.trials,
            self.seconds,
            if self.detail.is_empty() { String::new() } else { format!(" {}", self.detail) }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OracleCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Sizes of the random-forest suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestSuite {
    pub trials: usize,
    pub max_features: usize,
    pub max_trees: usize,
    pub max_depth: usize,
    pub max_background: usize,
    pub seed: u64,
}

impl Default for ForestSuite {
    fn default() -> Self {
        Self {
            trials: 100,
            max_features: 10,
            max_trees: 5,
            max_depth: 3,
            max_background: 20,
            seed: 0,
        }
    }
}

/// One random forest problem: model, point, background and target class.
pub struct ForestCase {
    pub forest: RandomForest,
    pub x: Array1<f64>,
    pub background: BackgroundSet,
    pub target: usize,
}

fn normal(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Random tree with splits on random features at thresholds in [-1, 1]
/// and random positive leaf counts.
pub fn random_tree(d: usize, n_classes: usize, max_depth: usize, r: &mut Rng) -> DecisionTree {
    fn grow(nodes: &mut Vec<Node>, slot: usize, depth: usize, d: usize, k: usize, max_depth: usize, r: &mut Rng) {
        if depth < max_depth && (depth == 0 || r.random_bool(0.75)) {
            let left = nodes.len();
            nodes.push(Node::Leaf { counts: vec![1; k] });
            nodes.push(Node::Leaf { counts: vec![1; k] });
            nodes[slot] = Node::Split {
                feature: r.random_range(0..d),
                threshold: r.random_range(-1.0..1.0),
                left,
                right: left + 1,
            };
            grow(nodes, left, depth + 1, d, k, max_depth, r);
            grow(nodes, left + 1, depth + 1, d, k, max_depth, r);
        } else {
            let mut counts: Vec<u32> = (0..k).map(|_| r.random_range(0..10)).collect();
            counts[r.random_range(0..k)] += 1;
            nodes[slot] = Node::Leaf { counts };
        }
    }
    let mut nodes = vec![Node::Leaf { counts: vec![1; n_classes] }];
    grow(&mut nodes, 0, 0, d, n_classes, max_depth, r);
    DecisionTree::from_nodes(nodes, d, n_classes).expect("generated tree is well formed")
}

/// The `trial`-th problem of a forest suite.
pub fn forest_case(suite: &ForestSuite, trial: usize) -> ForestCase {
    let mut r = rng::substream(suite.seed, &[trial as u64]);
    let d = r.random_range(1..=suite.max_features);
    let k = r.random_range(2..=3);
    let n_trees = r.random_range(1..=suite.max_trees);
    let trees = (0..n_trees).map(|_| random_tree(d, k, suite.max_depth, &mut r)).collect();
    let forest = RandomForest::from_trees(trees).expect("trees share a shape");
    let b = r.random_range(1..=suite.max_background);
    let rows = Array2::from_shape_simple_fn((b, d), || normal(&mut r));
    let x = Array1::from_shape_simple_fn(d, || normal(&mut r));
    ForestCase {
        forest,
        x,
        background: BackgroundSet::new(rows).expect("nonempty background"),
        target: r.random_range(0..k),
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest deviation of an explainer from the enumeration oracle over a
/// forest suite. The explainer is injectable so a corrupted one can serve
/// as a negative control.
pub fn check_forest_explainer<F>(name: &str, suite: &ForestSuite, tolerance: f64, explainer: F) -> OracleCheck
where
    F: Fn(&ForestCase) -> Result<AttributionVector>,
{
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_trial = 0;
    for t in 0..suite.trials {
        let case = forest_case(suite, t);
        let model = match ClassOutput::probability(&case.forest, case.target) {
            Ok(m) => m,
            Err(e) => return OracleCheck::failed(name, start, format!("trial {t}: {e}")),
        };
        let exact = match exact_shapley_oracle(&model, case.x.view(), &case.background) {
            Ok(a) => a,
            Err(e) => return OracleCheck::failed(name, start, format!("trial {t}: oracle: {e}")),
        };
        let got = match explainer(&case) {
            Ok(a) => a,
            Err(e) => return OracleCheck::failed(name, start, format!("trial {t}: {e}")),
        };
        let diff = max_abs_diff(&exact.values, &got.values);
        if diff > worst || diff.is_nan() {
            worst = if diff.is_nan() { f64::INFINITY } else { diff };
            worst_trial = t;
        }
    }
    let detail = if worst > tolerance {
        format!("worst at trial {worst_trial}")
    } else {
        String::new()
    };
    OracleCheck::new(name, suite.trials, worst, tolerance, start, detail)
}

pub fn check_tree_shap(suite: &ForestSuite) -> OracleCheck {
    check_forest_explainer("tree_shap vs enumeration", suite, 1e-9, |c| {
        tree_shap(&c.forest, c.x.view(), &c.background, c.target)
    })
}

pub fn check_kernel_shap_full(suite: &ForestSuite) -> OracleCheck {
    check_forest_explainer("kernel_shap (full enumeration) vs enumeration", suite, 1e-6, |c| {
        let model = ClassOutput::probability(&c.forest, c.target)?;
        let d = c.forest.n_features;
        let cfg = KernelShapConfig {
            n_coalitions: Some(1usize << d),
            seed: 0,
        };
        kernel_shap(&model, c.x.view(), &c.background, &cfg)
    })
}

/// Small random MLP for the gradient checks.
pub fn random_mlp(d: usize, n_classes: usize, seed: u64) -> Result<MlpClassifier> {
    MlpClassifier::init(
        d,
        n_classes,
        &MlpConfig {
            hidden: vec![8, 6],
            dropout: 0.2,
            seed,
            ..Default::default()
        },
    )
}

/// `|a − b| / max(|a|, |b|, floor)`
fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

const FD_STEP: f64 = 1e-5;
const FD_FLOOR: f64 = 1e-6;

/// Backpropagated loss gradient against central differences at random
/// parameter coordinates.
pub fn check_mlp_parameter_gradient(n_coords: usize, seed: u64) -> OracleCheck {
    let start = Instant::now();
    let name = "mlp parameter gradient vs finite differences";
    let run = || -> Result<f64> {
        let mut net = random_mlp(5, 3, seed)?;
        let mut r = rng::substream(seed, &[2]);
        let x = Array2::from_shape_simple_fn((12, 5), || normal(&mut r));
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let (_, grad) = net.loss_and_gradient(x.view(), &labels)?;
        let base = net.parameters();
        let mut worst = 0.0f64;
        let mut coords: Vec<usize> = (0..base.len()).collect();
        coords.shuffle(&mut rng::substream(seed, &[3]));
        for &c in coords.iter().take(n_coords) {
            let mut p = base.clone();
            p[c] += FD_STEP;
            net.set_parameters(&p)?;
            let up = net.loss(x.view(), &labels)?;
            p[c] -= 2.0 * FD_STEP;
            net.set_parameters(&p)?;
            let down = net.loss(x.view(), &labels)?;
            let fd = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grad[c], fd, FD_FLOOR));
        }
        net.set_parameters(&base)?;
        Ok(worst)
    };
    match run() {
        Ok(w) => OracleCheck::new(name, n_coords, w, 1e-4, start, String::new()),
        Err(e) => OracleCheck::failed(name, start, e.to_string()),
    }
}

/// Input gradient of a logit against central differences, every
/// coordinate of several random points.
pub fn check_mlp_input_gradient(n_points: usize, seed: u64) -> OracleCheck {
    let start = Instant::now();
    let name = "mlp input gradient vs finite differences";
    let run = || -> Result<(f64, usize)> {
        let net = random_mlp(6, 3, seed)?;
        let mut r = rng::substream(seed, &[4]);
        let mut worst = 0.0f64;
        let mut n = 0;
        for p in 0..n_points {
            let x = Array1::from_shape_simple_fn(6, || normal(&mut r));
            let target = p % 3;
            let g = net.input_gradient(x.view(), target)?;
            for j in 0..6 {
                let mut hi = x.clone();
                hi[j] += FD_STEP;
                let mut lo = x.clone();
                lo[j] -= FD_STEP;
                let zh = net.predict_logits(hi.view().insert_axis(ndarray::Axis(0)))?[[0, target]];
                let zl = net.predict_logits(lo.view().insert_axis(ndarray::Axis(0)))?[[0, target]];
                worst = worst.max(relative_error(g[j], (zh - zl) / (2.0 * FD_STEP), FD_FLOOR));
                n += 1;
            }
        }
        Ok((worst, n))
    };
    match run() {
        Ok((w, n)) => OracleCheck::new(name, n, w, 1e-4, start, String::new()),
        Err(e) => OracleCheck::failed(name, start, e.to_string()),
    }
}

fn logit(model: &dyn Classifier, x: ArrayView1<f64>, target: usize) -> Result<f64> {
    Ok(model.predict_logits(x.insert_axis(ndarray::Axis(0)))?[[0, target]])
}

/// Small MLP trained briefly on Gaussian blobs, so logits move by O(1)
/// across the input space.
pub fn trained_mlp(seed: u64) -> Result<(MlpClassifier, Array2<f64>)> {
    let data = gaussian_blobs(240, 6, 3, 1.0, seed)?;
    let (train, val) = (data.subset(&(0..200).collect::<Vec<_>>()), data.subset(&(200..240).collect::<Vec<_>>()));
    let net = train_mlp(
        &train,
        &val,
        &MlpConfig {
            hidden: vec![16, 8],
            max_epochs: 30,
            seed,
            ..Default::default()
        },
    )?;
    Ok((net, val.features))
}

/// `|Σφ − (z(x) − z(0))|` relative to `|z(x) − z(0)|` for IG with 500
/// steps on points of a trained MLP.
pub fn check_ig_completeness(n_points: usize, seed: u64) -> OracleCheck {
    let start = Instant::now();
    let name = "integrated gradients completeness (500 steps)";
    let run = || -> Result<(f64, usize)> {
        let (net, points) = trained_mlp(seed)?;
        let cfg = IgConfig {
            steps: 500,
            baseline: None,
        };
        let zero = Array1::zeros(net.n_features);
        let mut worst = 0.0f64;
        let n = n_points.min(points.nrows());
        for p in 0..n {
            let x = points.row(p);
            let target = net.predict(x.insert_axis(ndarray::Axis(0)))?[0];
            let phi = integrated_gradients(&net, x, &cfg, target)?;
            let gap = logit(&net, x, target)? - logit(&net, zero.view(), target)?;
            worst = worst.max(relative_error(phi.sum(), gap, FD_FLOOR));
        }
        Ok((worst, n))
    };
    match run() {
        Ok((w, n)) => OracleCheck::new(name, n, w, 1e-2, start, String::new()),
        Err(e) => OracleCheck::failed(name, start, e.to_string()),
    }
}

/// IG of a linear logit from a zero baseline is `w_i·x_i`.
pub fn check_ig_linear(n_points: usize, seed: u64) -> OracleCheck {
    let start = Instant::now();
    let name = "integrated gradients on a linear logit";
    let run = || -> Result<f64> {
        let mut r = rng::substream(seed, &[6]);
        let (d, k) = (7, 3);
        let model = LinearClassifier::new(
            Array2::from_shape_simple_fn((k, d), || normal(&mut r)),
            Array1::from_shape_simple_fn(k, || normal(&mut r)),
            k,
        )?;
        let w = model.logit_weights();
        let mut worst = 0.0f64;
        for p in 0..n_points {
            let x = Array1::from_shape_simple_fn(d, || normal(&mut r));
            let target = p % k;
            let phi = integrated_gradients(&model, x.view(), &IgConfig::default(), target)?;
            let expected: Vec<f64> = (0..d).map(|i| w[[target, i]] * x[i]).collect();
            worst = worst.max(
                phi.values
                    .iter()
                    .zip(&expected)
                    .map(|(a, b)| relative_error(*a, *b, 1e-12))
                    .fold(0.0, f64::max),
            );
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => OracleCheck::new(name, n_points, w, 1e-12, start, String::new()),
        Err(e) => OracleCheck::failed(name, start, e.to_string()),
    }
}

/// `(concordant − discordant) / (n(n−1)/2)` by direct pair counting.
pub fn tau_closed_form(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += ((a[i] - a[j]) * (b[i] - b[j])).signum();
        }
    }
    s / (n * (n - 1) / 2) as f64
}

/// `1 − 6 Σ d² / (n(n² − 1))` on the ranks of two tie-free sequences.
pub fn rho_closed_form(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in order.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// τ-b and average-rank ρ against the tie-free closed forms.
pub fn check_rank_correlations(trials: usize, seed: u64) -> OracleCheck {
    let start = Instant::now();
    let name = "kendall tau-b and spearman rho vs closed forms";
    let mut r = rng::substream(seed, &[7]);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = r.random_range(2..=40);
        let a: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut b = a.clone();
        b.shuffle(&mut r);
        let tau = kendall_tau(&a, &b).map(|t| (t - tau_closed_form(&a, &b)).abs());
        let rho = spearman_rho(&a, &b).map(|p| (p - rho_closed_form(&a, &b)).abs());
        match (tau, rho) {
            (Ok(t), Ok(p)) => worst = worst.max(t).max(p),
            _ => return OracleCheck::failed(name, start, format!("undefined on a permutation of length {n}")),
        }
    }
    OracleCheck::new(name, trials, worst, 1e-12, start, String::new())
}

/// XEC computed with ratio EG equals XEC with absolute (mean) EG.
pub fn check_xec_invariance(trials: usize, seed: u64) -> OracleCheck {
    let start = Instant::now();
    let name = "XEC invariance under ratio vs absolute EG";
    let mut r = rng::substream(seed, &[8]);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let levels = r.random_range(3..=8);
        let n = r.random_range(2..=30);
        let clean: Vec<f64> = (0..n).map(|_| r.random_range(0.001..0.1)).collect();
        let mut ratio = Vec::new();
        let mut absolute = Vec::new();
        for _ in 0..levels {
            let pert: Vec<f64> = (0..n).map(|_| r.random_range(0.0..0.3)).collect();
            ratio.push(epistemic_growth(&clean, &pert).map(|g| g.value).unwrap_or(f64::NAN));
            absolute.push(epistemic_growth(&vec![0.0; n], &pert).map(|g| g.value).unwrap_or(f64::NAN));
        }
        let xd: Vec<f64> = (0..levels).map(|_| r.random_range(0.0..1.0)).collect();
        let curve = |eg: Vec<f64>| SweepCurve {
            levels: (0..levels).map(|l| l as f64).collect(),
            xd: xd.clone(),
            eg,
            excluded: vec![0; levels],
        };
        match (xec(&curve(ratio)), xec(&curve(absolute))) {
            (Ok(a), Ok(b)) => worst = worst.max((a - b).abs()),
            (Err(_), Err(_)) => {}
            _ => return OracleCheck::failed(name, start, "XEC defined for only one EG form".into()),
        }
    }
    OracleCheck::new(name, trials, worst, 0.0, start, String::new())
}

/// L∞ budgets of BIM and PGD, their step sizes, and C&W with `c = 0`.
pub fn check_attack_contracts(n_points: usize, seed: u64) -> OracleCheck {
    let start = Instant::now();
    let name = "attack contracts";
    let run = || -> Result<(f64, Vec<String>)> {
        let net = random_mlp(5, 3, seed)?;
        let cfg = AttackConfig::default();
        let mut r = rng::substream(seed, &[9]);
        let mut worst = 0.0f64;
        let mut problems = Vec::new();
        for eps in [0.01, 0.05, 0.1, 0.2] {
            if cfg.bim.step(eps) != 0.25 * eps || cfg.pgd.step(eps) != 0.125 * eps {
                problems.push(format!("step size at eps {eps}"));
            }
            for p in 0..n_points {
                let x = Array1::from_shape_simple_fn(5, || normal(&mut r));
                let y = net.predict(x.view().insert_axis(ndarray::Axis(0)))?[0];
                let bim = bim_attack(&net, x.view(), y, eps, &cfg)?;
                let pgd = pgd_attack(&net, x.view(), y, eps, &cfg, rng::substream_seed(seed, &[p as u64]))?;
                for adv in [&bim, &pgd] {
                    let linf = (adv - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if linf > eps {
                        problems.push(format!("L-inf {linf} exceeds eps {eps}"));
                    }
                    worst = worst.max((linf - eps).max(0.0));
                }
            }
        }
        for _ in 0..n_points {
            let x = Array1::from_shape_simple_fn(5, || normal(&mut r));
            let y = net.predict(x.view().insert_axis(ndarray::Axis(0)))?[0];
            let cw = cw_attack(&net, x.view(), y, 0.0, &cfg.cw)?;
            if cw.adversarial != x {
                problems.push("C&W with c = 0 moved the input".into());
                worst = worst.max(max_abs_diff(cw.adversarial.as_slice().unwrap_or(&[]), x.as_slice().unwrap_or(&[])));
            }
        }
        Ok((worst, problems))
    };
    match run() {
        Ok((w, problems)) => {
            let mut check = OracleCheck::new(name, n_points, w, 0.0, start, problems.join("; "));
            check.passed &= problems.is_empty();
            check
        }
        Err(e) => OracleCheck::failed(name, start, e.to_string()),
    }
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> OracleReport {
    let suite = ForestSuite {
        seed,
        ..Default::default()
    };
    OracleReport {
        checks: vec![
            check_tree_shap(&suite),
            check_kernel_shap_full(&suite),
            check_mlp_parameter_gradient(20, seed),
            check_mlp_input_gradient(5, seed),
            check_ig_completeness(20, seed),
            check_ig_linear(20, seed),
            check_rank_correlations(200, seed),
            check_xec_invariance(50, seed),
            check_attack_contracts(5, seed),
        ],
    }
}
