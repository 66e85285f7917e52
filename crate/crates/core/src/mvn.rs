//! Multivariate normal kernel: sampling, conditional moments and the
//! orthant probability `P(W ≤ b)` by randomized lattice rules.
//!
//! The cdf uses the separation-of-variables transform with Genz–Bretz
//! variable reordering, a Richtmyer rank-1 lattice (tent-transformed) and
//! independent random shifts. Lattice sizes double until the error estimate
//! (three standard errors over shifts) meets the requested tolerance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Factor, JITTER_MAX, JITTER_START};
use crate::special::{norm_cdf, norm_pdf, norm_sf};

/// Draws `n` vectors `L z`, `z` standard normal, i.e. `N(0, L Lᵀ)`.
pub fn mvn_sample<R: Rng + ?Sized>(rng: &mut R, factor: &Factor, n: usize) -> Vec<Vec<f64>> {
    let d = factor.dim();
    let mut z = vec![0.0; d];
    (0..n)
        .map(|_| {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            factor.mul_lower(&z)
        })
        .collect()
}

/// Like [`mvn_sample`] but factorises `sigma` first (with jitter).
pub fn mvn_sample_cov<R: Rng + ?Sized>(
    rng: &mut R,
    sigma: &DMatrix<f64>,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    let f = Factor::with_jitter(sigma)?;
    Ok(mvn_sample(rng, &f, n))
}

/// Conditional mean `Σ₂₁Σ₁₁⁻¹x₁` and covariance `Σ₂₂ − Σ₂₁Σ₁₁⁻¹Σ₁₂` of
/// the free coordinates given the coordinates `cond_idx`.
///
/// The free coordinates are the complement of `cond_idx` in increasing
/// order.
pub fn gauss_conditional(
    sigma: &DMatrix<f64>,
    cond_idx: &[usize],
    x1: &[f64],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = sigma.nrows();
    let (free, s11) = split_blocks(sigma, cond_idx)?;
    if x1.len() != cond_idx.len() {
        return Err(Error::Dimension {
            expected: cond_idx.len(),
            got: x1.len(),
        });
    }
    let f11 = Factor::new(&s11).map_err(|_| {
        Error::Singular("conditioning block of the covariance matrix".into())
    })?;
    let m = free.len();
    let k = cond_idx.len();
    // B = L₁₁⁻¹ Σ₁₂ column by column.
    let mut b = DMatrix::zeros(k, m);
    for (col, &j) in free.iter().enumerate() {
        let s12: Vec<f64> = cond_idx.iter().map(|&i| sigma[(i, j)]).collect();
        let v = f11.solve_lower(&s12);
        for r in 0..k {
            b[(r, col)] = v[r];
        }
    }
    let w = f11.solve_lower(x1);
    let mean: Vec<f64> = (0..m)
        .map(|c| (0..k).map(|r| b[(r, c)] * w[r]).sum())
        .collect();
    let mut cov = DMatrix::zeros(m, m);
    for a in 0..m {
        for c in 0..=a {
            let s = sigma[(free[a], free[c])] - (0..k).map(|r| b[(r, a)] * b[(r, c)]).sum::<f64>();
            cov[(a, c)] = s;
            cov[(c, a)] = s;
        }
    }
    debug_assert_eq!(d, m + k);
    Ok((mean, cov))
}

/// Complement of `cond_idx` and the `Σ₁₁` block, after validating indices.
pub(crate) fn split_blocks(
    sigma: &DMatrix<f64>,
    cond_idx: &[usize],
) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let d = sigma.nrows();
    if sigma.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: sigma.ncols(),
        });
    }
    if cond_idx.is_empty() || cond_idx.len() >= d {
        return Err(Error::domain(
            "conditioning set must be a non-empty strict subset of the coordinates",
        ));
    }
    let mut mark = vec![false; d];
    for &i in cond_idx {
        if i >= d || mark[i] {
            return Err(Error::domain(format!("bad or repeated conditioning index {i}")));
        }
        mark[i] = true;
    }
    let free = (0..d).filter(|&i| !mark[i]).collect();
    let k = cond_idx.len();
    let s11 = DMatrix::from_fn(k, k, |a, b| sigma[(cond_idx[a], cond_idx[b])]);
    Ok((free, s11))
}

/// Controls for [`mvn_cdf`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnOptions {
    /// Stop once the error estimate is below `max(abs_tol, rel_tol·p)`,
    /// with `p` the smaller of the probability and its complement.
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Number of random shifts (at least 12 is recommended).
    pub shifts: usize,
    /// Lattice size per shift for the first pass.
    pub initial_points: usize,
    /// Cap on the total number of points over all shifts.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-4,
            rel_tol: 0.0,
            shifts: 12,
            initial_points: 128,
            max_points: 10_000_000,
            seed: 0x5eed_1a91,
        }
    }
}

/// Probability, its complement (computed without cancellation) and an
/// error estimate equal to three standard errors over shifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnResult {
    pub prob: f64,
    pub complement: f64,
    pub error: f64,
    pub points: usize,
}

/// `P(W ≤ upper)` for `W ~ N(0, Σ)`; bounds may be `+∞` (or `-∞`).
///
/// `Σ` is usually a correlation matrix but any SPD covariance works.
pub fn mvn_cdf(sigma: &DMatrix<f64>, upper: &[f64], opts: &MvnOptions) -> Result<MvnResult> {
    let plan = MvnPlan::new(sigma, upper)?;
    plan.cdf(upper, opts)
}

/// Variable order and permuted Cholesky factor for repeated cdf
/// evaluations on one covariance matrix.
///
/// The order is chosen for the bounds supplied at construction; it stays
/// valid (only less efficient) for other bounds.
#[derive(Debug, Clone)]
pub struct MvnPlan {
    order: Vec<usize>,
    /// Row-major packed lower triangle of the permuted factor.
    l: Vec<f64>,
    /// Permuted covariance, row-major.
    cov: Vec<f64>,
    d: usize,
}

impl MvnPlan {
    pub fn new(sigma: &DMatrix<f64>, upper: &[f64]) -> Result<Self> {
        let d = sigma.nrows();
        if sigma.ncols() != d || d == 0 {
            return Err(Error::Dimension {
                expected: d,
                got: sigma.ncols(),
            });
        }
        if upper.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: upper.len(),
            });
        }
        if upper.iter().any(|b| b.is_nan()) {
            return Err(Error::domain("NaN bound in multivariate normal cdf"));
        }
        for i in 0..d {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 || !sigma[(i, j)].is_finite() {
                    return Err(Error::domain("covariance matrix is not symmetric"));
                }
            }
        }
        if let Some(p) = pivoted_cholesky(sigma, upper, 0.0) {
            return Ok(p);
        }
        let mut eps = JITTER_START;
        while eps <= JITTER_MAX * (1.0 + 1e-9) {
            if let Some(p) = pivoted_cholesky(sigma, upper, eps) {
                return Ok(p);
            }
            eps *= 10.0;
        }
        Err(Error::NotPositiveDefinite {
            max_jitter: JITTER_MAX,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.l[start..start + i + 1]
    }

    /// Randomized lattice estimate of `P(W ≤ upper)`.
    pub fn cdf(&self, upper: &[f64], opts: &MvnOptions) -> Result<MvnResult> {
        if upper.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: upper.len(),
            });
        }
        if upper.iter().any(|b| b.is_nan()) {
            return Err(Error::domain("NaN bound in multivariate normal cdf"));
        }
        let b: Vec<f64> = self.order.iter().map(|&i| upper[i]).collect();
        if b.iter().any(|&v| v == f64::NEG_INFINITY) {
            return Ok(MvnResult {
                prob: 0.0,
                complement: 1.0,
                error: 0.0,
                points: 0,
            });
        }
        if self.d == 1 {
            let s = self.l[0];
            return Ok(MvnResult {
                prob: norm_cdf(b[0] / s),
                complement: norm_sf(b[0] / s),
                error: 0.0,
                points: 0,
            });
        }
        let shifts = opts.shifts.max(2);
        let alpha = richtmyer(self.d - 1);
        let deltas: Vec<Vec<f64>> = (0..shifts)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(s as u64 + 1);
                (0..self.d - 1).map(|_| rng.gen::<f64>()).collect()
            })
            .collect();
        // Per-shift running sums of (prob, complement) over lattice points.
        let mut sums = vec![(0.0f64, 0.0f64); shifts];
        let mut done = 0usize;
        let mut n = opts.initial_points.max(8);
        loop {
            let new: Vec<(f64, f64)> = deltas
                .par_iter()
                .map(|delta| {
                    let mut w = vec![0.0; self.d - 1];
                    let mut y = vec![0.0; self.d - 1];
                    let mut acc = (0.0, 0.0);
                    for k in done + 1..=n {
                        for i in 0..self.d - 1 {
                            let t = (k as f64 * alpha[i] + delta[i]).fract();
                            w[i] = (2.0 * t - 1.0).abs();
                        }
                        let (p, c) = self.integrand(&b, &w, &mut y);
                        acc.0 += p;
                        acc.1 += c;
                    }
                    acc
                })
                .collect();
            for (s, v) in sums.iter_mut().zip(new) {
                s.0 += v.0;
                s.1 += v.1;
            }
            done = n;
            let res = summarize(&sums, n);
            let target = opts
                .abs_tol
                .max(opts.rel_tol * res.prob.min(res.complement));
            if res.error <= target || 2 * n * shifts > opts.max_points {
                if res.error > target {
                    log::debug!(
                        "mvn_cdf stopped at point cap: error {:e} > target {:e}",
                        res.error,
                        target
                    );
                }
                return Ok(res);
            }
            n *= 2;
        }
    }

    /// Importance-sampling estimate of `P(W ≰ upper)`, suited to rare
    /// unions of exceedances.
    ///
    /// A site `k` is drawn with probability proportional to `P(W_k > b_k)`,
    /// then `W` is drawn given `W_k > b_k`; the estimate is the sum of the
    /// marginal exceedance probabilities divided by the number of sites
    /// exceeded. Its relative variance stays bounded as the union becomes
    /// rare. Samples come in seeded batches; `initial_points` is the size
    /// of the first round (at least 4096) and rounds double until the
    /// tolerance is met.
    pub fn union_tail(&self, upper: &[f64], opts: &MvnOptions) -> Result<MvnResult> {
        let d = self.d;
        if upper.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: upper.len(),
            });
        }
        if upper.iter().any(|b| b.is_nan()) {
            return Err(Error::domain("NaN bound in multivariate normal cdf"));
        }
        let b: Vec<f64> = self.order.iter().map(|&i| upper[i]).collect();
        let exact = |c: f64| MvnResult {
            prob: 1.0 - c,
            complement: c,
            error: 0.0,
            points: 0,
        };
        if b.iter().any(|&v| v == f64::NEG_INFINITY) {
            return Ok(exact(1.0));
        }
        let sd: Vec<f64> = (0..d).map(|j| self.cov[j * d + j].sqrt()).collect();
        let p: Vec<f64> = b.iter().zip(&sd).map(|(bj, s)| norm_sf(bj / s)).collect();
        let pbar: f64 = p.iter().sum();
        if !(pbar > 0.0) {
            return Ok(exact(0.0));
        }
        if d == 1 {
            return Ok(exact(p[0]));
        }
        let mut cum = Vec::with_capacity(d);
        let mut acc = 0.0;
        for &pj in &p {
            acc += pj;
            cum.push(acc);
        }

        const BATCH: usize = 64;
        const MIN_TAIL_SAMPLES: usize = 4096;
        let sample_batch = |batch: u64| -> (f64, f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(batch + 1);
            let mut z = vec![0.0; d];
            let mut w = vec![0.0; d];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..BATCH {
                let target = rng.gen::<f64>() * pbar;
                let k = cum.partition_point(|&c| c <= target).min(d - 1);
                let u: f64 = 1.0 - rng.gen::<f64>();
                let wk = sd[k] * crate::special::norm_isf(u * p[k]);
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for i in 0..d {
                    let row = self.row(i);
                    w[i] = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                }
                let shift = wk - w[k];
                let ck = &self.cov[k * d..(k + 1) * d];
                let ckk = ck[k];
                let mut count = 0usize;
                for j in 0..d {
                    let v = if j == k { wk } else { w[j] + ck[j] / ckk * shift };
                    if v > b[j] || j == k {
                        count += 1;
                    }
                }
                let est = pbar / count as f64;
                s1 += est;
                s2 += est * est;
            }
            (s1, s2)
        };

        let mut done = 0u64;
        // Multiple exceedances are rare events themselves; too few samples
        // would report a spuriously small error.
        let mut round = (opts.initial_points.max(MIN_TAIL_SAMPLES) / BATCH) as u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        loop {
            let parts: Vec<(f64, f64)> = (done..done + round).into_par_iter().map(sample_batch).collect();
            for (a, c) in parts {
                s1 += a;
                s2 += c;
            }
            done += round;
            let n = (done as usize * BATCH) as f64;
            let mean = s1 / n;
            let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
            let err = 3.0 * (var / n).sqrt();
            let c = mean.min(1.0);
            let target = opts.abs_tol.max(opts.rel_tol * c.min(1.0 - c));
            if err <= target || 2 * done as usize * BATCH > opts.max_points {
                if err > target {
                    log::debug!("union_tail stopped at point cap: error {err:e} > target {target:e}");
                }
                return Ok(MvnResult {
                    prob: 1.0 - c,
                    complement: c,
                    error: err,
                    points: n as usize,
                });
            }
            round *= 2;
        }
    }

    /// Separation-of-variables integrand at one lattice point: returns
    /// `Π e_i` and `1 − Π e_i` (the latter summed stably).
    #[inline]
    fn integrand(&self, b: &[f64], w: &[f64], y: &mut [f64]) -> (f64, f64) {
        let d = self.d;
        let mut prod = 1.0;
        let mut comp = 0.0;
        for i in 0..d {
            let row = self.row(i);
            let mut s = 0.0;
            for j in 0..i {
                s += row[j] * y[j];
            }
            let a = (b[i] - s) / row[i];
            let (e, one_minus_e) = if a == f64::INFINITY {
                (1.0, 0.0)
            } else {
                (norm_cdf(a), norm_sf(a))
            };
            comp += prod * one_minus_e;
            prod *= e;
            if prod <= 0.0 {
                return (0.0, 1.0);
            }
            if i + 1 < d {
                y[i] = fast_norm_ppf(w[i] * e);
            }
        }
        (prod, comp)
    }
}

fn summarize(sums: &[(f64, f64)], n: usize) -> MvnResult {
    let s = sums.len() as f64;
    let means: Vec<(f64, f64)> = sums
        .iter()
        .map(|(p, c)| (p / n as f64, c / n as f64))
        .collect();
    let mp = means.iter().map(|m| m.0).sum::<f64>() / s;
    let mc = means.iter().map(|m| m.1).sum::<f64>() / s;
    let var_p = means.iter().map(|m| (m.0 - mp).powi(2)).sum::<f64>() / (s - 1.0);
    let var_c = means.iter().map(|m| (m.1 - mc).powi(2)).sum::<f64>() / (s - 1.0);
    let se = (var_p.max(var_c) / s).sqrt();
    MvnResult {
        prob: mp.clamp(0.0, 1.0),
        complement: mc.clamp(0.0, 1.0),
        error: 3.0 * se,
        points: n * sums.len(),
    }
}

/// Quantile used inside the integrand, with the endpoints clamped so that
/// lattice points on the boundary stay finite.
#[inline]
fn fast_norm_ppf(p: f64) -> f64 {
    let p = p.clamp(1e-300, 1.0 - 1e-16);
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Generating vector `frac(√pᵢ)` over the first `n` primes.
fn richtmyer(n: usize) -> Vec<f64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes.iter().map(|&p| (p as f64).sqrt().fract()).collect()
}

/// Cholesky with Genz–Bretz reordering: at each step the remaining variable
/// with the smallest conditional probability of lying below its bound goes
/// next, and its expected truncated value feeds the later choices.
fn pivoted_cholesky(sigma: &DMatrix<f64>, upper: &[f64], jitter: f64) -> Option<MvnPlan> {
    let d = sigma.nrows();
    let mut a = sigma.clone();
    for i in 0..d {
        a[(i, i)] += jitter;
    }
    let mut order: Vec<usize> = (0..d).collect();
    let mut bounds = upper.to_vec();
    // Working lower factor in the current permuted coordinates.
    let mut l = DMatrix::<f64>::zeros(d, d);
    let mut y = vec![0.0; d];
    let tiny = 1e-14 * (0..d).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-300);
    for k in 0..d {
        let mut best = k;
        let mut best_p = f64::INFINITY;
        for i in k..d {
            let var = a[(i, i)] - (0..k).map(|j| l[(i, j)] * l[(i, j)]).sum::<f64>();
            if var <= tiny {
                continue;
            }
            let s: f64 = (0..k).map(|j| l[(i, j)] * y[j]).sum();
            let p = norm_cdf((bounds[i] - s) / var.sqrt());
            if p < best_p {
                best_p = p;
                best = i;
            }
        }
        if best != k {
            a.swap_rows(k, best);
            a.swap_columns(k, best);
            l.swap_rows(k, best);
            order.swap(k, best);
            bounds.swap(k, best);
        }
        let var = a[(k, k)] - (0..k).map(|j| l[(k, j)] * l[(k, j)]).sum::<f64>();
        if !(var > tiny) || !var.is_finite() {
            return None;
        }
        let lkk = var.sqrt();
        l[(k, k)] = lkk;
        for i in k + 1..d {
            let s: f64 = (0..k).map(|j| l[(i, j)] * l[(k, j)]).sum();
            l[(i, k)] = (a[(i, k)] - s) / lkk;
        }
        let s: f64 = (0..k).map(|j| l[(k, j)] * y[j]).sum();
        let t = (bounds[k] - s) / lkk;
        let pt = norm_cdf(t);
        y[k] = if t == f64::INFINITY {
            0.0
        } else if pt > 1e-300 {
            -norm_pdf(t) / pt
        } else {
            t
        };
    }
    let mut packed = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in 0..=i {
            packed.push(l[(i, j)]);
        }
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let v: f64 = (0..=j).map(|m| l[(i, m)] * l[(j, m)]).sum();
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Some(MvnPlan {
        order,
        l: packed,
        cov,
        d,
    })
}
