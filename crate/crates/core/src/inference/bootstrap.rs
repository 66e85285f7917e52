use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Sample standard deviation of each parameter over successful fits.
    pub se: Vec<f64>,
    pub estimates: Vec<Vec<f64>>,
    pub failures: usize,
}

impl BootstrapResult {
    /// Empirical `(lo, hi)` quantiles of each parameter.
    pub fn percentile_ci(&self, level: f64) -> Vec<(f64, f64)> {
        let k = self.se.len();
        let a = 0.5 * (1.0 - level);
        (0..k)
            .map(|j| {
                let mut v: Vec<f64> = self.estimates.iter().map(|e| e[j]).collect();
                v.sort_by(f64::total_cmp);
                let at = |p: f64| {
                    let pos = p * (v.len() - 1) as f64;
                    let (i, f) = (pos.floor() as usize, pos.fract());
                    if i + 1 < v.len() {
                        v[i] * (1.0 - f) + v[i + 1] * f
                    } else {
                        v[i]
                    }
                };
                (at(a), at(1.0 - a))
            })
            .collect()
    }
}

/// Row indices of one moving-block resample of `n` rows: blocks of length
/// `block` start uniformly in `[0, n − block]` and are concatenated, then
/// truncated to `n`.
pub fn block_resample_indices<R: Rng + ?Sized>(rng: &mut R, n: usize, block: usize) -> Vec<usize> {
    let block = block.clamp(1, n.max(1));
    let mut idx = Vec::with_capacity(n + block);
    while idx.len() < n {
        let s = rng.gen_range(0..=n - block);
        idx.extend(s..s + block);
    }
    idx.truncate(n);
    idx
}

/// Refits `fit` on `reps` block resamples of `n` rows. Replicate `r` uses
/// stream `r` of `seed`; failed replicates are counted and skipped.
pub fn block_bootstrap<F>(n: usize, block: usize, reps: usize, seed: u64, fit: F) -> Result<BootstrapResult>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    if block < 1 || block > n {
        return Err(Error::domain(format!("block length {block} must lie in [1, {n}]")));
    }
    if reps < 2 {
        return Err(Error::domain(format!("need at least 2 replicates, got {reps}")));
    }
    let outcomes: Vec<Result<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            fit(&block_resample_indices(&mut rng, n, block))
        })
        .collect();
    let mut estimates = Vec::new();
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(v) => estimates.push(v),
            Err(e) => {
                log::warn!("bootstrap replicate failed: {e}");
                failures += 1;
            }
        }
    }
    if estimates.len() < 2 {
        return Err(Error::numeric(format!(
            "only {} of {reps} bootstrap replicates succeeded",
            estimates.len()
        )));
    }
    let k = estimates[0].len();
    let m = estimates.len() as f64;
    let se = (0..k)
        .map(|j| {
            let mean = estimates.iter().map(|e| e[j]).sum::<f64>() / m;
            (estimates.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapResult {
        se,
        estimates,
        failures,
    })
}
