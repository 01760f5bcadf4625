//! Natural input perturbations and gradient-based attacks.

mod attack;

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{column_std, median};
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::rng;

pub use attack::{
    attack_batch, bim_attack, cw_attack, pgd_attack, AttackConfig, AttackKind, CwConfig, CwResult, LinfConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Gaussian,
    Missing,
    Permute,
    Bim,
    Pgd,
    Cw,
}

impl PerturbationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Missing => "missing",
            Self::Permute => "permute",
            Self::Bim => "bim",
            Self::Pgd => "pgd",
            Self::Cw => "cw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gaussian" => Self::Gaussian,
            "missing" => Self::Missing,
            "permute" => Self::Permute,
            "bim" => Self::Bim,
            "pgd" => Self::Pgd,
            "cw" => Self::Cw,
            _ => return None,
        })
    }

    pub fn is_attack(&self) -> bool {
        matches!(self, Self::Bim | Self::Pgd | Self::Cw)
    }

    /// Levels swept in the correlation study.
    pub fn default_levels(&self) -> Vec<f64> {
        match self {
            Self::Gaussian => vec![0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0],
            Self::Missing => vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
            Self::Permute => vec![0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25],
            Self::Bim | Self::Pgd => vec![0.01, 0.05, 0.1, 0.2],
            Self::Cw => vec![0.1, 1.0, 10.0],
        }
    }
}

/// One perturbation: kind, level λ (σ, p, f, ε or c) and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub level: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, level: f64, seed: u64) -> Self {
        Self { kind, level, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            PerturbationKind::Missing | PerturbationKind::Permute => (0.0..=1.0).contains(&self.level),
            _ => self.level >= 0.0 && self.level.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidInput(format!(
                "level {} not admissible for {}",
                self.level,
                self.kind.as_str()
            )));
        }
        Ok(())
    }
}

/// Extra inputs some perturbations need.
#[derive(Clone, Copy, Default)]
pub struct PerturbContext<'a> {
    /// Attack target; labels default to its predictions.
    pub model: Option<&'a dyn Classifier>,
    /// Fallback medians for fully masked columns.
    pub train_medians: Option<&'a [f64]>,
    /// Labels to attack; `None` uses the model's predicted labels.
    pub labels: Option<&'a [usize]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub data: Array2<f64>,
    pub spec: PerturbationSpec,
    /// Some column was fully masked and imputed from training medians.
    pub fallback_used: bool,
    /// Columns shuffled by a permutation.
    pub permuted_columns: Vec<usize>,
    /// Achieved ℓ2 distance per row (C&W only).
    pub l2_distances: Option<Vec<f64>>,
}

impl Perturbed {
    fn plain(data: Array2<f64>, spec: PerturbationSpec) -> Self {
        Self {
            data,
            spec,
            fallback_used: false,
            permuted_columns: Vec::new(),
            l2_distances: None,
        }
    }

    /// Write the perturbed matrix as CSV preceded by a `#` provenance line.
    pub fn write_csv(&self, path: &Path, feature_names: Option<&[String]>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(
            file,
            "# kind={} level={} seed={}",
            self.spec.kind.as_str(),
            self.spec.level,
            self.spec.seed
        )?;
        let mut w = csv::Writer::from_writer(file);
        let header: Vec<String> = match feature_names {
            Some(names) => names.to_vec(),
            None => (0..self.data.ncols()).map(|j| format!("x{j}")).collect(),
        };
        w.write_record(&header)?;
        for row in self.data.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Apply `spec` to the batch `x`.
pub fn perturb(spec: &PerturbationSpec, x: ArrayView2<f64>, ctx: &PerturbContext) -> Result<Perturbed> {
    spec.validate()?;
    match spec.kind {
        PerturbationKind::Gaussian => Ok(Perturbed::plain(gaussian_noise(x, spec.level, spec.seed), *spec)),
        PerturbationKind::Missing => {
            let (data, fallback_used) = missing_values(x, spec.level, spec.seed, ctx.train_medians)?;
            Ok(Perturbed {
                fallback_used,
                ..Perturbed::plain(data, *spec)
            })
        }
        PerturbationKind::Permute => {
            let (data, cols) = permute_features(x, spec.level, spec.seed)?;
            Ok(Perturbed {
                permuted_columns: cols,
                ..Perturbed::plain(data, *spec)
            })
        }
        kind => {
            let model = ctx
                .model
                .ok_or(Error::CapabilityAbsent("attacks need a differentiable model"))?;
            let attack = match kind {
                PerturbationKind::Bim => AttackKind::Bim,
                PerturbationKind::Pgd => AttackKind::Pgd,
                _ => AttackKind::Cw,
            };
            let cfg = AttackConfig::default();
            let (data, l2) = attack_batch(model, x, ctx.labels, attack, spec.level, &cfg, spec.seed)?;
            Ok(Perturbed {
                l2_distances: l2,
                ..Perturbed::plain(data, *spec)
            })
        }
    }
}

/// `x̃ = x + σ·std·ε` with the population std of each column of `x`.
pub fn gaussian_noise(x: ArrayView2<f64>, sigma: f64, seed: u64) -> Array2<f64> {
    let stds = column_std(&x.to_owned());
    gaussian_noise_scaled(x, sigma, &stds, seed)
}

/// Gaussian noise with explicit per-feature scales. Row `i` draws from its
/// own substream, so a row's noise does not depend on the rest of the batch.
pub fn gaussian_noise_scaled(x: ArrayView2<f64>, sigma: f64, stds: &[f64], seed: u64) -> Array2<f64> {
    let mut out = x.to_owned();
    if sigma == 0.0 {
        return out;
    }
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let mut r = rng::substream(seed, &[i as u64]);
        for (j, v) in row.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(&mut r);
            if stds[j] > 0.0 {
                *v += sigma * stds[j] * e;
            }
        }
    }
    out
}

/// Mask each entry with probability `p` and impute the column median of
/// the unmasked entries in the batch. Columns with no unmasked entry use
/// `train_medians` (or 0 when absent); the flag reports that fallback.
pub fn missing_values(
    x: ArrayView2<f64>,
    p: f64,
    seed: u64,
    train_medians: Option<&[f64]>,
) -> Result<(Array2<f64>, bool)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("masking probability {p} outside [0, 1]")));
    }
    let (n, d) = x.dim();
    if let Some(m) = train_medians {
        if m.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.len(),
            });
        }
    }
    let mut mask = Array2::from_elem((n, d), false);
    if p > 0.0 {
        for i in 0..n {
            let mut r = rng::substream(seed, &[i as u64]);
            for j in 0..d {
                mask[[i, j]] = r.random::<f64>() < p;
            }
        }
    }
    let mut out = x.to_owned();
    let mut fallback = false;
    for j in 0..d {
        if !mask.column(j).iter().any(|&m| m) {
            continue;
        }
        let kept: Vec<f64> = (0..n).filter(|&i| !mask[[i, j]]).map(|i| x[[i, j]]).collect();
        let fill = match median(&kept) {
            Some(m) => m,
            None => {
                fallback = true;
                train_medians.map_or(0.0, |m| m[j])
            }
        };
        for i in 0..n {
            if mask[[i, j]] {
                out[[i, j]] = fill;
            }
        }
    }
    Ok((out, fallback))
}

/// Shuffle `⌈f·d⌉` randomly chosen columns across rows. Returns the data
/// and the chosen columns in ascending order.
pub fn permute_features(x: ArrayView2<f64>, f: f64, seed: u64) -> Result<(Array2<f64>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidInput(format!("permutation fraction {f} outside [0, 1]")));
    }
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::InvalidInput("permutation needs at least two rows".into()));
    }
    let m = ((f * d as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut r = rng::rng(seed);
    let mut cols = sample(&mut r, d, m.min(d)).into_vec();
    cols.sort_unstable();
    let mut out = x.to_owned();
    for &j in &cols {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::substream(seed, &[1, j as u64]));
        let col: Array1<f64> = order.iter().map(|&i| x[[i, j]]).collect();
        out.column_mut(j).assign(&col);
    }
    Ok((out, cols))
}

/// Column-wise population std of a batch, as used by [`gaussian_noise`].
pub fn split_std(x: ArrayView2<f64>) -> Vec<f64> {
    if x.len_of(Axis(0)) == 0 {
        return vec![0.0; x.ncols()];
    }
    column_std(&x.to_owned())
}
