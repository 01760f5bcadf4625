//! Small dense solvers used by the regression-based explainers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `1e-12` times the largest
/// absolute entry of `a`.
pub fn solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let mut m = a.to_owned();
    let mut rhs = b.to_owned();
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (piv, piv_val) = (col..n)
            .map(|r| (r, m[[r, col]].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_val <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap([col, k], [piv, k]);
            }
            rhs.swap(col, piv);
        }
        let diag = m[[col, col]];
        for r in (col + 1)..n {
            let factor = m[[r, col]] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[[r, k]] -= factor * m[[col, k]];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for k in (r + 1)..n {
            acc -= m[[r, k]] * x[k];
        }
        x[r] = acc / m[[r, r]];
    }
    Some(x)
}

/// Result of a weighted least-squares fit.
#[derive(Debug, Clone)]
pub struct WlsFit {
    pub coef: Array1<f64>,
    pub intercept: f64,
    /// Ridge added because the normal equations were singular.
    pub stabilized: bool,
}

/// Weighted ridge regression `min Σ w (y − b − xβ)² + alpha ‖β‖²`.
///
/// With `fit_intercept` the intercept is unpenalized (data are centered by
/// their weighted means first). A singular system is retried with a small
/// ridge and reported through [`WlsFit::stabilized`].
pub fn weighted_ridge(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    alpha: f64,
    fit_intercept: bool,
) -> Option<WlsFit> {
    let (n, p) = x.dim();
    assert_eq!(y.len(), n);
    assert_eq!(w.len(), n);
    let wsum: f64 = w.sum();
    if wsum <= 0.0 {
        return None;
    }
    let (x_mean, y_mean) = if fit_intercept {
        let mut xm = Array1::<f64>::zeros(p);
        let mut ym = 0.0;
        for i in 0..n {
            for j in 0..p {
                xm[j] += w[i] * x[[i, j]];
            }
            ym += w[i] * y[i];
        }
        (xm / wsum, ym / wsum)
    } else {
        (Array1::zeros(p), 0.0)
    };

    let mut gram = Array2::<f64>::zeros((p, p));
    let mut rhs = Array1::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for j in 0..p {
            row[j] = x[[i, j]] - x_mean[j];
        }
        let yc = y[i] - y_mean;
        for j in 0..p {
            let wr = wi * row[j];
            rhs[j] += wr * yc;
            for k in j..p {
                gram[[j, k]] += wr * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            gram[[j, k]] = gram[[k, j]];
        }
        gram[[j, j]] += alpha;
    }

    let (coef, stabilized) = match solve(gram.view(), rhs.view()) {
        Some(c) => (c, false),
        None => {
            let trace = (0..p).map(|j| gram[[j, j]]).sum::<f64>().max(1.0);
            let mut g = gram.clone();
            for j in 0..p {
                g[[j, j]] += 1e-8 * trace / p.max(1) as f64;
            }
            (solve(g.view(), rhs.view())?, true)
        }
    };
    let intercept = y_mean - coef.dot(&x_mean);
    Some(WlsFit {
        coef,
        intercept,
        stabilized,
    })
}
