use crate::dist::{StdLaplace, WeibullTail};
use crate::error::{Error, Result};
use crate::field::DepType;
use crate::special::norm_ppf;

use super::Dataset;

/// Average ranks divided by `n + 1`.
pub fn rank_pit(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; n];
    let denom = n as f64 + 1.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let r = 0.5 * ((i + 1) + j) as f64;
        for &k in &idx[i..j] {
            out[k] = r / denom;
        }
        i = j;
    }
    out
}

/// Per-site rank transform to `(0, 1)`; rows are time points.
pub fn empirical_pit(data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let n = data.n_times();
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 observations, got {n}")));
    }
    let cols: Vec<Vec<f64>> = (0..data.n_sites()).map(|j| rank_pit(&data.column(j))).collect();
    Ok((0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
}

/// Semi-parametric transform: the fitted Weibull cdf above the tail
/// threshold and ranks below it. Site `j` has covariate `covariate[j]`.
pub fn weibull_pit(data: &Dataset, tail: &WeibullTail, covariate: &[f64]) -> Result<Vec<Vec<f64>>> {
    if covariate.len() != data.n_sites() {
        return Err(Error::Dimension {
            expected: data.n_sites(),
            got: covariate.len(),
        });
    }
    let mut u = empirical_pit(data)?;
    for (row, x) in u.iter_mut().zip(data.rows()) {
        for ((p, &v), &c) in row.iter_mut().zip(x).zip(covariate) {
            if v > tail.threshold_u {
                *p = tail.cdf(v, c).min(1.0 - 1e-12);
            }
        }
    }
    Ok(u)
}

/// Entrywise standard Laplace or standard normal quantile.
pub fn to_margin(u: &[Vec<f64>], target: DepType) -> Result<Vec<Vec<f64>>> {
    u.iter()
        .map(|row| {
            row.iter()
                .map(|&p| {
                    if !(p > 0.0 && p < 1.0) {
                        return Err(Error::domain(format!("uniform value {p} outside (0,1)")));
                    }
                    match target {
                        DepType::Laplace => StdLaplace::quantile(p),
                        DepType::Gaussian => Ok(norm_ppf(p)),
                    }
                })
                .collect()
        })
        .collect()
}
