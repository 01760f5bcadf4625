//! Rank correlations and the degradation / growth / XEC statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::{average_ranks, AttributionMethod};
use crate::error::{Error, Result};
use crate::perturbation::PerturbationSpec;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("rank correlation needs at least two entries".into()));
    }
    Ok(())
}

/// Kendall's τ-b. Without ties this is `(C − D) / (d choose 2)`.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    let (mut s, mut n1, mut n2, mut n0) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = (a[i] - a[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            let db = (b[i] - b[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            n0 += 1;
            if da == 0 {
                n1 += 1;
            }
            if db == 0 {
                n2 += 1;
            }
            s += da * db;
        }
    }
    let denom = (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::Undefined("Kendall tau of a constant ranking"));
    }
    Ok((s as f64 / denom).clamp(-1.0, 1.0))
}

/// Spearman's ρ as the Pearson correlation of average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Undefined("Spearman rho of a constant vector"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// τ between the absolute-magnitude rankings of two attributions.
pub fn attribution_tau(clean: &[f64], perturbed: &[f64]) -> Result<f64> {
    let a: Vec<f64> = clean.iter().map(|v| v.abs()).collect();
    let b: Vec<f64> = perturbed.iter().map(|v| v.abs()).collect();
    kendall_tau(&a, &b)
}

/// One sample's clean-vs-perturbed stability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub sample: usize,
    pub tau: f64,
    pub method: AttributionMethod,
    pub spec: PerturbationSpec,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    /// Mean τ over the samples that produced at least one valid τ.
    pub xd: f64,
    /// Per-sample τ averaged over seeds; `None` marks an excluded sample.
    pub per_sample: Vec<Option<f64>>,
    pub n_excluded: usize,
}

/// Explanation degradation at one level. `perturbed[i][s]` is sample `i`'s
/// attribution under seed `s`, `None` when the explainer failed. Samples
/// whose τ is undefined for every seed are excluded and counted.
pub fn explanation_degradation(clean: &[Vec<f64>], perturbed: &[Vec<Option<Vec<f64>>>]) -> Result<Degradation> {
    if clean.len() != perturbed.len() {
        return Err(Error::DimensionMismatch {
            expected: clean.len(),
            found: perturbed.len(),
        });
    }
    let per_sample: Vec<Option<f64>> = clean
        .iter()
        .zip(perturbed)
        .map(|(c, seeds)| {
            let taus: Vec<f64> = seeds
                .iter()
                .filter_map(|p| p.as_ref().and_then(|p| attribution_tau(c, p).ok()))
                .collect();
            (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / taus.len() as f64)
        })
        .collect();
    let used: Vec<f64> = per_sample.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::Undefined("no sample produced a valid Kendall tau"));
    }
    Ok(Degradation {
        xd: used.iter().sum::<f64>() / used.len() as f64,
        n_excluded: per_sample.len() - used.len(),
        per_sample,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub value: f64,
    /// Clean uncertainty summed to zero, so `value` is the perturbed mean.
    pub absolute: bool,
}

/// `Σ U(x̃) / Σ U(x)`, or the mean of `U(x̃)` when the clean sum is zero.
pub fn epistemic_growth(clean: &[f64], perturbed: &[f64]) -> Result<Growth> {
    if clean.len() != perturbed.len() || clean.is_empty() {
        return Err(Error::InvalidInput("epistemic growth needs equal nonempty inputs".into()));
    }
    let c: f64 = clean.iter().sum();
    let p: f64 = perturbed.iter().sum();
    Ok(if c > 0.0 {
        Growth {
            value: p / c,
            absolute: false,
        }
    } else {
        Growth {
            value: p / perturbed.len() as f64,
            absolute: true,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub levels: Vec<f64>,
    pub xd: Vec<f64>,
    pub eg: Vec<f64>,
    /// Samples excluded from XD at each level.
    #[serde(default)]
    pub excluded: Vec<usize>,
}

impl SweepCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["level", "xd", "eg", "excluded"])?;
        for i in 0..self.levels.len() {
            let ex = self.excluded.get(i).copied().unwrap_or(0);
            w.write_record([
                self.levels[i].to_string(),
                self.xd[i].to_string(),
                self.eg[i].to_string(),
                ex.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Spearman correlation between XD and EG across the levels of a sweep.
pub fn xec(curve: &SweepCurve) -> Result<f64> {
    if curve.xd.len() != curve.eg.len() || curve.xd.len() != curve.levels.len() {
        return Err(Error::InvalidInput("sweep curve sequences differ in length".into()));
    }
    if curve.levels.len() < 3 {
        return Err(Error::InvalidInput("XEC needs at least three levels".into()));
    }
    spearman_rho(&curve.xd, &curve.eg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tau_by_pairs(a: &[f64], b: &[f64]) -> f64 {
        let d = a.len();
        let (mut c, mut dis) = (0.0, 0.0);
        for i in 0..d {
            for j in i + 1..d {
                if (a[i] - a[j]) * (b[i] - b[j]) > 0.0 {
                    c += 1.0;
                } else {
                    dis += 1.0;
                }
            }
        }
        (c - dis) / (d * (d - 1) / 2) as f64
    }

    #[test]
    fn tau_examples() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn tau_b_with_ties_matches_reference() {
        // x = (1,2,2,3), y = (1,3,2,2): S = 2, ties 1 each side, n0 = 6.
        let t = kendall_tau(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 2.0]).unwrap();
        assert!((t - 2.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn rho_examples() {
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 0.0, -5.0]).unwrap(), -1.0);
        assert!(spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn degradation_and_growth() {
        let clean = vec![vec![1.0, -2.0, 3.0]];
        let same = vec![vec![Some(vec![1.0, -2.0, 3.0])]];
        assert_eq!(explanation_degradation(&clean, &same).unwrap().xd, 1.0);
        let swapped = vec![vec![Some(vec![1.0, 3.0, -2.0]), None]];
        let d = explanation_degradation(&clean, &swapped).unwrap();
        assert!((d.xd - 1.0 / 3.0).abs() < 1e-15);
        let bad = vec![vec![Some(vec![0.0, 0.0, 0.0])]];
        assert!(explanation_degradation(&clean, &bad).is_err());

        assert_eq!(epistemic_growth(&[0.1, 0.2], &[0.1, 0.2]).unwrap().value, 1.0);
        let g = epistemic_growth(&[0.0, 0.0], &[0.1, 0.3]).unwrap();
        assert!(g.absolute && (g.value - 0.2).abs() < 1e-15);
    }

    #[test]
    fn doubled_disagreement_quadruples_growth() {
        use crate::uncertainty::{ensemble_epistemic, ClassReduction};
        use ndarray::Array3;
        let base = Array3::from_shape_fn((4, 3, 2), |(m, i, k)| {
            let p = 0.5 + 0.05 * (m as f64 - 1.5) * (i as f64 + 1.0) / 3.0;
            if k == 0 { p } else { 1.0 - p }
        });
        let doubled = base.mapv(|p| 0.5 + 2.0 * (p - 0.5));
        let u0 = ensemble_epistemic(&base, ClassReduction::PredictedClass).unwrap();
        let u1 = ensemble_epistemic(&doubled, ClassReduction::PredictedClass).unwrap();
        let g = epistemic_growth(&u0, &u1).unwrap();
        assert!((g.value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn xec_examples() {
        let curve = SweepCurve {
            levels: vec![0.1, 0.2, 0.3],
            xd: vec![0.9, 0.5, 0.1],
            eg: vec![1.0, 1.5, 3.0],
            excluded: vec![],
        };
        assert_eq!(xec(&curve).unwrap(), -1.0);
        let flat = SweepCurve {
            eg: vec![1.0; 3],
            ..curve.clone()
        };
        assert!(xec(&flat).is_err());
        let abs = SweepCurve {
            eg: curve.eg.iter().map(|v| v * 0.02).collect(),
            ..curve.clone()
        };
        assert_eq!(xec(&abs).unwrap(), xec(&curve).unwrap());
    }

    proptest! {
        #[test]
        fn tau_b_equals_pair_formula_without_ties(perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle(), d in 2usize..=12) {
            let b: Vec<f64> = perm.iter().filter(|&&v| v < d).map(|&v| v as f64).collect();
            let a: Vec<f64> = (0..d).map(|v| v as f64).collect();
            let fast = kendall_tau(&a, &b).unwrap();
            prop_assert!((fast - tau_by_pairs(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn rho_equals_closed_form_without_ties(perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle(), d in 2usize..=12) {
            let b: Vec<f64> = perm.iter().filter(|&&v| v < d).map(|&v| v as f64).collect();
            let a: Vec<f64> = (0..d).map(|v| v as f64).collect();
            let ssd: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            let n = d as f64;
            let closed = 1.0 - 6.0 * ssd / (n * (n * n - 1.0));
            prop_assert!((spearman_rho(&a, &b).unwrap() - closed).abs() < 1e-12);
        }

        #[test]
        fn rank_statistics_ignore_monotone_transforms(v in prop::collection::vec(0.01f64..10.0, 3..10), w in prop::collection::vec(0.01f64..10.0, 3..10)) {
            let d = v.len().min(w.len());
            let (v, w) = (&v[..d], &w[..d]);
            let tv: Vec<f64> = v.iter().map(|x| x.ln() * 3.0 + 1.0).collect();
            if let (Ok(t1), Ok(t2)) = (kendall_tau(v, w), kendall_tau(&tv, w)) {
                prop_assert!((t1 - t2).abs() < 1e-12);
            }
            if let (Ok(r1), Ok(r2)) = (spearman_rho(v, w), spearman_rho(&tv, w)) {
                prop_assert!((r1 - r2).abs() < 1e-12);
            }
        }
    }
}
