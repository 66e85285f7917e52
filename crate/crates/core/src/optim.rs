//! Derivative-free minimisation by the Nelder–Mead simplex method.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    /// Initial simplex edge per coordinate.
    pub steps: Vec<f64>,
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below
    /// `f_tol·(|f_best| + f_tol)`...
    pub f_tol: f64,
    /// ...and every vertex is within `x_tol` of the best one.
    pub x_tol: f64,
}

impl NelderMeadOptions {
    pub fn new(steps: Vec<f64>) -> Self {
        Self {
            steps,
            max_evals: 2000,
            f_tol: 1e-8,
            x_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0`. Non-finite values are treated as `+∞`.
///
/// Returns the best point even when the evaluation budget runs out, with
/// `converged` false.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> Result<Minimum> {
    let n = x0.len();
    if n == 0 {
        return Err(Error::domain("empty starting point"));
    }
    if opts.steps.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: opts.steps.len(),
        });
    }
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if opts.steps[i] != 0.0 { opts.steps[i] } else { 0.05 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        let spread_ok = best.is_finite()
            && (worst - best).abs() <= opts.f_tol * (best.abs() + opts.f_tol);
        let size_ok = simplex[1..].iter().all(|v| {
            v.iter()
                .zip(&simplex[0])
                .all(|(a, b)| (a - b).abs() <= opts.x_tol)
        });
        if spread_ok && size_ok {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let xc = along(if fr < values[n] { rho } else { -rho });
        let fc = eval(&xc, &mut evals);
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            values[i] = eval(&shrunk, &mut evals);
            simplex[i] = shrunk;
        }
    }

    let (ib, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty simplex");
    if !values[ib].is_finite() {
        return Err(Error::Convergence {
            message: "objective is not finite anywhere on the simplex".into(),
            best: simplex[ib].clone(),
            best_value: values[ib],
        });
    }
    Ok(Minimum {
        x: simplex[ib].clone(),
        value: values[ib],
        evals,
        converged,
    })
}
