use serde::Serialize;

use crate::dist::WeibullTail;
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};

use super::Dataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginOptions {
    /// Estimate the covariate slope `δ₁`; otherwise it is fixed at 0.
    pub fit_delta1: bool,
    pub min_exceedances: usize,
    pub max_evals: usize,
}

impl Default for MarginOptions {
    fn default() -> Self {
        Self {
            fit_delta1: true,
            min_exceedances: 30,
            max_evals: 3000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginFit {
    pub tail: WeibullTail,
    pub loglik: f64,
    pub exceedances: usize,
    pub censored: usize,
    pub evals: usize,
}

/// Maximises the censored independence likelihood of a Weibull tail with
/// scale `exp(δ₀ + δ₁·c_j)`: values below `u` contribute `ln F(u)`, values
/// above contribute the log density.
pub fn fit_weibull_margins(
    data: &Dataset,
    u: f64,
    covariate: &[f64],
    opts: &MarginOptions,
) -> Result<MarginFit> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::domain(format!("threshold must be > 0, got {u}")));
    }
    let d = data.n_sites();
    if covariate.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: covariate.len(),
        });
    }
    let mut below = vec![0usize; d];
    let mut exc: Vec<(f64, f64)> = Vec::new();
    for row in data.rows() {
        for (j, &x) in row.iter().enumerate() {
            if x > u {
                exc.push((x.ln(), covariate[j]));
            } else {
                below[j] += 1;
            }
        }
    }
    if exc.is_empty() {
        return Err(Error::domain(format!("no exceedances of threshold {u}")));
    }
    if exc.len() < opts.min_exceedances {
        return Err(Error::domain(format!(
            "only {} exceedances of threshold {u}, need {}",
            exc.len(),
            opts.min_exceedances
        )));
    }
    let c_min = covariate.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_max = covariate.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c_span = c_max - c_min;
    let fit_slope = opts.fit_delta1 && c_span > 0.0;
    let c_mid = if fit_slope { 0.5 * (c_min + c_max) } else { 0.0 };
    let ln_u = u.ln();

    // Work with a centred covariate so δ₀ and δ₁ decouple.
    let nll = |p: &[f64]| -> f64 {
        let g = p[0].exp();
        let a = p[1];
        let b = if fit_slope { p[2] } else { 0.0 };
        let ln_g = p[0];
        let mut ll = 0.0;
        for (j, &m) in below.iter().enumerate() {
            if m > 0 {
                let h = (g * (ln_u - a - b * (covariate[j] - c_mid))).exp();
                ll += m as f64 * (-(-h).exp_m1()).ln();
            }
        }
        for &(lx, c) in &exc {
            let z = lx - a - b * (c - c_mid);
            ll += ln_g - lx + g * z - (g * z).exp();
        }
        -ll
    };

    let mean_ln = exc.iter().map(|e| e.0).sum::<f64>() / exc.len() as f64;
    let mut x0 = vec![0.0, mean_ln];
    let mut steps = vec![0.3, 0.2];
    if fit_slope {
        x0.push(0.0);
        steps.push(0.1 / c_span);
    }
    let mut nm = NelderMeadOptions::new(steps);
    nm.max_evals = opts.max_evals;
    nm.f_tol = 1e-12;
    nm.x_tol = 1e-7;
    let mut best = nelder_mead(nll, &x0, &nm)?;
    let mut evals = best.evals;
    // One restart from the optimum guards against early simplex collapse.
    let again = nelder_mead(nll, &best.x, &nm)?;
    evals += again.evals;
    if again.value <= best.value {
        best = again;
    }
    if !best.converged {
        return Err(Error::Convergence {
            message: format!("Weibull margin fit after {evals} evaluations"),
            best: best.x,
            best_value: best.value,
        });
    }
    let gamma = best.x[0].exp();
    let delta1 = if fit_slope { best.x[2] } else { 0.0 };
    let delta0 = best.x[1] - delta1 * c_mid;
    Ok(MarginFit {
        tail: WeibullTail::new(gamma, delta0, delta1, u)?,
        loglik: -best.value,
        exceedances: exc.len(),
        censored: below.iter().sum(),
        evals,
    })
}
