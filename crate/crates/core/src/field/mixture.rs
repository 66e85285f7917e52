//! `P(X ≤ b) = ∫ Φ_Σ(b/y) f_Y(y) dy` for a Laplace vector, by
//! Gauss–Legendre quadrature in `ln y` with a quasi-Monte Carlo normal cdf
//! at every node.
//!
//! Whichever of the probability and its complement is smaller is
//! integrated directly, so tiny joint tail probabilities keep their
//! relative accuracy; the other is one minus it.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dist::rayleigh_pdf;
use crate::error::{Error, Result};
use crate::mvn::{MvnOptions, MvnPlan};
use crate::quad::GaussLegendre;
use crate::special::{norm_cdf, norm_sf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureOptions {
    /// Relative accuracy target for the smaller of probability and
    /// complement.
    pub rel_tol: f64,
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Double the number of panels until successive values agree to
    /// `rel_tol`; otherwise a single panel is used.
    pub adaptive: bool,
    pub max_doublings: usize,
    /// Relative target for the normal cdf at each node; `rel_tol` when
    /// unset.
    pub node_rel_tol: Option<f64>,
    /// Complement nodes whose union bound `Σ_j Φ̄(b_j/(σ_j y))` is below
    /// this use importance sampling instead of the lattice rule; 0 never
    /// switches.
    pub tail_switch: f64,
    /// Settings for the normal cdf at each node; tolerances are derived
    /// from `rel_tol`, the remaining fields are used as given.
    pub mvn: MvnOptions,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            nodes: 64,
            adaptive: true,
            max_doublings: 4,
            node_rel_tol: None,
            tail_switch: 0.2,
            mvn: MvnOptions::default(),
        }
    }
}

impl MixtureOptions {
    /// Fixed, cheaper rule with a fixed seed: a smooth deterministic
    /// function of the parameters, suited to objective functions.
    pub fn fast() -> Self {
        Self {
            rel_tol: 1e-3,
            nodes: 40,
            adaptive: false,
            max_doublings: 0,
            node_rel_tol: None,
            tail_switch: 0.0,
            mvn: MvnOptions {
                initial_points: 64,
                max_points: 200_000,
                ..MvnOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureResult {
    pub prob: f64,
    pub complement: f64,
    /// Change between the last two quadrature levels (0 without doubling).
    pub quad_error: f64,
    /// Propagated error estimate of the normal cdf values.
    pub mvn_error: f64,
    pub nodes: usize,
}

/// `P(X ≤ b)` for `X ~ L(Σ)`; bounds may be infinite.
pub fn mv_laplace_cdf(sigma: &DMatrix<f64>, b: &[f64], opts: &MixtureOptions) -> Result<MixtureResult> {
    let plan = MvnPlan::new(sigma, b)?;
    let scales: Vec<f64> = (0..sigma.nrows()).map(|i| sigma[(i, i)].sqrt()).collect();
    mixture_cdf(&plan, &scales, b, opts)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Prob,
    Complement,
}

const Y_MIN: f64 = 1e-4;
const Y_MAX: f64 = 40.0;
const SCAN: usize = 800;

/// Same as [`mv_laplace_cdf`] with a prepared plan; `scales[j] = √Σ_jj`.
pub fn mixture_cdf(
    plan: &MvnPlan,
    scales: &[f64],
    b: &[f64],
    opts: &MixtureOptions,
) -> Result<MixtureResult> {
    let d = plan.dim();
    if b.len() != d || scales.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: b.len().min(scales.len()),
        });
    }
    if b.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("NaN bound in Laplace cdf"));
    }
    let trivial = |prob: f64| MixtureResult {
        prob,
        complement: 1.0 - prob,
        quad_error: 0.0,
        mvn_error: 0.0,
        nodes: 0,
    };
    if b.iter().any(|&v| v == f64::NEG_INFINITY) {
        return Ok(trivial(0.0));
    }
    if b.iter().all(|&v| v == f64::INFINITY) {
        return Ok(trivial(1.0));
    }

    // Cheap bounds locate where each side's integrand lives:
    // P(W ≤ b/y) ≤ min_j Φ(b_j/(σ_j y)) and 1 − P ≤ Σ_j Φ̄(b_j/(σ_j y)).
    let (s0, s1) = (Y_MIN.ln(), Y_MAX.ln());
    let grid: Vec<f64> = (0..SCAN)
        .map(|i| s0 + (s1 - s0) * i as f64 / (SCAN - 1) as f64)
        .collect();
    let mut prob_proxy = Vec::with_capacity(SCAN);
    let mut comp_proxy = Vec::with_capacity(SCAN);
    for &s in &grid {
        let y = s.exp();
        let w = rayleigh_pdf(y) * y;
        let mut pmin = 1.0f64;
        let mut csum = 0.0f64;
        for (bj, sj) in b.iter().zip(scales) {
            if *bj == f64::INFINITY {
                continue;
            }
            let z = bj / (sj * y);
            pmin = pmin.min(norm_cdf(z));
            csum += norm_sf(z);
        }
        prob_proxy.push(w * pmin);
        comp_proxy.push(w * csum.min(1.0));
    }
    let h = (s1 - s0) / (SCAN - 1) as f64;
    let ip: f64 = prob_proxy.iter().sum::<f64>() * h;
    let ic: f64 = comp_proxy.iter().sum::<f64>() * h;
    let (side, proxy, iproxy) = if ip <= ic {
        (Side::Prob, &prob_proxy, ip)
    } else {
        (Side::Complement, &comp_proxy, ic)
    };
    if !(iproxy > 0.0) {
        return Ok(match side {
            Side::Prob => trivial(0.0),
            Side::Complement => trivial(1.0),
        });
    }
    let peak = proxy.iter().cloned().fold(0.0, f64::max);
    let keep = |v: &f64| *v >= 1e-16 * peak;
    let first = proxy.iter().position(keep).unwrap_or(0);
    let last = proxy.iter().rposition(keep).unwrap_or(SCAN - 1);
    let lo = grid[first.saturating_sub(1)];
    let hi = grid[(last + 1).min(SCAN - 1)];

    let node_tol = opts.node_rel_tol.unwrap_or(opts.rel_tol);
    let mut node_opts = opts.mvn;
    node_opts.rel_tol = node_tol;

    let rule = GaussLegendre::new(opts.nodes.max(2));
    let eval_level = |panels: usize| -> Result<(f64, f64, usize)> {
        let width = (hi - lo) / panels as f64;
        let pts: Vec<(f64, f64)> = (0..panels)
            .flat_map(|k| {
                let a = lo + k as f64 * width;
                rule.mapped(a, a + width).collect::<Vec<_>>()
            })
            .collect();
        let n_pts = pts.len() as f64;
        let vals: Vec<Result<(f64, f64)>> = pts
            .par_iter()
            .enumerate()
            .map(|(i, &(s, w))| {
                let y = s.exp();
                let jw = w * rayleigh_pdf(y) * y;
                if !(jw > 0.0) {
                    return Ok((0.0, 0.0));
                }
                let scaled: Vec<f64> = b.iter().map(|v| v / y).collect();
                // Nodes use independent randomizations, so their errors add
                // in quadrature and each gets an equal share of the variance.
                let o = MvnOptions {
                    abs_tol: node_tol * iproxy / (n_pts.sqrt() * jw),
                    seed: node_opts.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    ..node_opts
                };
                let union: f64 = match side {
                    Side::Complement => scaled.iter().zip(scales).map(|(v, s)| norm_sf(v / s)).sum(),
                    Side::Prob => f64::INFINITY,
                };
                let r = if union < opts.tail_switch {
                    plan.union_tail(&scaled, &o)?
                } else {
                    plan.cdf(&scaled, &o)?
                };
                let v = match side {
                    Side::Prob => r.prob,
                    Side::Complement => r.complement,
                };
                Ok((jw * v, jw * r.error))
            })
            .collect();
        let mut total = 0.0;
        let mut var = 0.0;
        for v in vals {
            let (a, e) = v?;
            total += a;
            var += e * e;
        }
        Ok((total, var.sqrt(), pts.len()))
    };

    let (mut value, mut mvn_error, mut nodes) = eval_level(1)?;
    let mut quad_error = 0.0;
    if opts.adaptive {
        let mut panels = 1;
        let mut converged = false;
        for _ in 0..opts.max_doublings.max(1) {
            panels *= 2;
            let (v, e, n) = eval_level(panels)?;
            nodes += n;
            quad_error = (v - value).abs();
            value = v;
            mvn_error = e;
            if quad_error <= opts.rel_tol * v.abs() + mvn_error {
                converged = true;
                break;
            }
        }
        if !converged {
            log::debug!(
                "mixture quadrature stopped at {panels} panels (change {quad_error:e}, value {value:e})"
            );
        }
    }
    let value = value.clamp(0.0, 1.0);
    let (prob, complement) = match side {
        Side::Prob => (value, 1.0 - value),
        Side::Complement => (1.0 - value, value),
    };
    Ok(MixtureResult {
        prob,
        complement,
        quad_error,
        mvn_error,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::StdLaplace;
    use crate::field::LaplaceFieldModel;

    #[test]
    fn univariate_matches_laplace_cdf() {
        let one = DMatrix::identity(1, 1);
        for x in [-20.0, -3.0, -0.5, 0.0, 1.0, 4.0, 25.0] {
            let r = mv_laplace_cdf(&one, &[x], &MixtureOptions::default()).unwrap();
            let (p, c) = (StdLaplace::cdf(x), StdLaplace::survival(x));
            assert!((r.prob - p).abs() <= 1e-6 * p.max(1e-300) + 1e-15, "x={x}: {} vs {p}", r.prob);
            assert!((r.complement - c).abs() <= 1e-6 * c.max(1e-300) + 1e-15, "x={x}: {} vs {c}", r.complement);
        }
        let fast = mv_laplace_cdf(&one, &[6.0], &MixtureOptions::fast()).unwrap();
        assert!((fast.complement / StdLaplace::survival(6.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sum_of_independent_bounds() {
        // X_1 and X_2 share Y, so independence of W does not make them
        // independent; check against a nested 1-D integral instead.
        let s = DMatrix::identity(2, 2);
        let b = [2.0, 3.0];
        let opts = MixtureOptions::default();
        let r = mv_laplace_cdf(&s, &b, &opts).unwrap();
        let exact = crate::quad::adaptive_semi_infinite(
            |y| rayleigh_pdf(y) * norm_sf(2.0 / y).mul_add(-1.0, 1.0) * norm_cdf(3.0 / y),
            0.0,
            1e-15,
            1e-12,
        )
        .unwrap()
        .value;
        assert!((r.prob - exact).abs() < opts.rel_tol * (1.0 - exact), "{} vs {exact}", r.prob);
        assert!((r.prob + r.complement - 1.0).abs() < 1e-15);
    }

    #[test]
    fn min_tail_has_relative_accuracy() {
        let rho: f64 = 0.5;
        let s = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let u = 8.0;
        let r = mv_laplace_cdf(&s, &[-u, -u], &MixtureOptions::default()).unwrap();
        // bivariate normal orthant via one-factor representation
        let exact = crate::quad::adaptive_semi_infinite(
            |y| {
                rayleigh_pdf(y)
                    * crate::quad::adaptive(
                        |z| {
                            crate::special::norm_pdf(z)
                                * norm_cdf((-u / y - rho.sqrt() * z) / (1.0 - rho).sqrt()).powi(2)
                        },
                        -12.0,
                        12.0,
                        0.0,
                        1e-10,
                    )
                    .map(|v| v.value)
                    .unwrap_or(0.0)
            },
            0.0,
            0.0,
            1e-8,
        )
        .unwrap()
        .value;
        assert!(exact > 0.0 && exact < 1e-4);
        assert!((r.prob / exact - 1.0).abs() < 2e-3, "{} vs {exact}", r.prob);
    }

    #[test]
    fn agrees_with_simulation() {
        use crate::covariance::{CorrelationSpec, Family, SiteSet};
        use crate::field::DepType;
        let sites = SiteSet::new(
            (0..5).map(|i| format!("s{i}")).collect(),
            (0..5).map(|i| [i as f64, (i * i) as f64 * 0.3]).collect(),
            vec![0.0; 5],
        )
        .unwrap();
        let m = LaplaceFieldModel::new(sites, CorrelationSpec::isotropic(Family::Exponential, 2.0, 1.0), DepType::Laplace)
            .unwrap();
        let u = 2.5;
        let r = mv_laplace_cdf(m.sigma(), &[u; 5], &MixtureOptions::default()).unwrap();
        let n = 400_000;
        let hits = m
            .simulate_seeded(77, n)
            .iter()
            .filter(|x| x.iter().any(|&v| v > u))
            .count() as f64;
        let p = hits / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((r.complement - p).abs() < 3.0 * se, "{} vs MC {p} ± {se}", r.complement);
    }

    #[test]
    fn trivial_bounds() {
        let s = DMatrix::identity(3, 3);
        let o = MixtureOptions::default();
        assert_eq!(mv_laplace_cdf(&s, &[f64::INFINITY; 3], &o).unwrap().prob, 1.0);
        assert_eq!(mv_laplace_cdf(&s, &[1.0, f64::NEG_INFINITY, 2.0], &o).unwrap().prob, 0.0);
        let r = mv_laplace_cdf(&s, &[1.0, f64::INFINITY, f64::INFINITY], &o).unwrap();
        assert!((r.prob - StdLaplace::cdf(1.0)).abs() < 1e-6);
    }
}
