use rayon::prelude::*;
use serde::Serialize;

use crate::dist::StdLaplace;
use crate::error::{Error, Result};
use crate::field::{mixture_cdf, DepType, LaplaceDensity, LaplaceFieldModel, MixtureOptions, LN_2PI};
use crate::mvn::{MvnOptions, MvnPlan};
use crate::special::{norm_ln_pdf, norm_sf};
use crate::tail::{marginal_exceedance_prob, sum_dependence_coef, sum_exceedance_prob, ExceedanceKind, ExceedanceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PaMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaResult {
    pub prob: f64,
    /// Quadrature plus normal-cdf error, or the Monte Carlo standard error.
    pub error: f64,
    pub method: PaMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikOptions {
    pub mixture: MixtureOptions,
    /// Subtract the marginal log densities from exceedance terms, giving a
    /// copula likelihood on uniform margins.
    pub jacobian: bool,
    /// Replicates for the Monte Carlo fallback (at least 10000).
    pub mc_draws: usize,
    pub mc_seed: u64,
}

impl Default for LikOptions {
    fn default() -> Self {
        Self {
            mixture: MixtureOptions::default(),
            jacobian: true,
            mc_draws: 100_000,
            mc_seed: 0x00c0_ffee,
        }
    }
}

impl LikOptions {
    pub fn fast() -> Self {
        Self {
            mixture: MixtureOptions::fast(),
            ..Self::default()
        }
    }
}

fn mvn_opts_for(mix: &MixtureOptions) -> MvnOptions {
    MvnOptions {
        abs_tol: 0.0,
        rel_tol: mix.rel_tol,
        ..mix.mvn
    }
}

/// Probability of the exceedance set under the model.
///
/// Sum and marginal kinds are closed form; max and min kinds use the
/// normal cdf (Gaussian type) or its scale-mixture integral (Laplace type).
/// Falls back to Monte Carlo when quadrature fails.
pub fn exceedance_prob_pa(
    model: &LaplaceFieldModel,
    spec: &ExceedanceSpec,
    opts: &LikOptions,
) -> Result<PaResult> {
    spec.validate(model.dim())?;
    let sigma = model.sigma();
    let d = model.dim();
    let u = spec.u;
    let closed = |prob: f64| PaResult {
        prob,
        error: 0.0,
        method: PaMethod::ClosedForm,
    };
    match (spec.kind, model.dep_type()) {
        (ExceedanceKind::Sum, DepType::Laplace) => return Ok(closed(sum_exceedance_prob(sigma, u))),
        (ExceedanceKind::Sum, DepType::Gaussian) => {
            return Ok(closed(norm_sf(u / sum_dependence_coef(sigma))))
        }
        (ExceedanceKind::Marginal, DepType::Laplace) => {
            return Ok(closed(marginal_exceedance_prob(sigma, spec.component, u)))
        }
        (ExceedanceKind::Marginal, DepType::Gaussian) => {
            return Ok(closed(norm_sf(u / sigma[(spec.component, spec.component)].sqrt())))
        }
        _ => {}
    }
    // max: 1 − P(X ≤ u·e); min: P(X ≥ u·e) = P(X ≤ −u·e) by symmetry.
    let bound = if spec.kind == ExceedanceKind::Max { u } else { -u };
    let b = vec![bound; d];
    let quad = (|| -> Result<PaResult> {
        let plan = MvnPlan::new(sigma, &b)?;
        let (p, c, err) = match model.dep_type() {
            DepType::Gaussian => {
                let r = plan.cdf(&b, &mvn_opts_for(&opts.mixture))?;
                (r.prob, r.complement, r.error)
            }
            DepType::Laplace => {
                let scales: Vec<f64> = (0..d).map(|i| sigma[(i, i)].sqrt()).collect();
                let r = mixture_cdf(&plan, &scales, &b, &opts.mixture)?;
                (r.prob, r.complement, r.quad_error + r.mvn_error)
            }
        };
        let prob = if spec.kind == ExceedanceKind::Max { c } else { p };
        Ok(PaResult {
            prob,
            error: err,
            method: PaMethod::Quadrature,
        })
    })();
    match quad {
        Ok(r) => Ok(r),
        Err(e) => {
            log::warn!("quadrature for exceedance probability failed ({e}); using Monte Carlo");
            exceedance_prob_mc(model, spec, opts.mc_draws.max(10_000), opts.mc_seed)
        }
    }
}

/// Monte Carlo estimate from `n` simulated fields.
pub fn exceedance_prob_mc(
    model: &LaplaceFieldModel,
    spec: &ExceedanceSpec,
    n: usize,
    seed: u64,
) -> Result<PaResult> {
    spec.validate(model.dim())?;
    if n < 10_000 {
        return Err(Error::domain(format!("Monte Carlo needs at least 10000 draws, got {n}")));
    }
    let hits = model
        .simulate_seeded(seed, n)
        .iter()
        .filter(|x| spec.contains(x))
        .count();
    let p = hits as f64 / n as f64;
    Ok(PaResult {
        prob: p,
        error: (p * (1.0 - p) / n as f64).sqrt(),
        method: PaMethod::MonteCarlo,
    })
}

/// Censored log-likelihood of standard-margin data under `model`.
pub fn censored_loglik(
    model: &LaplaceFieldModel,
    data: &[Vec<f64>],
    spec: &ExceedanceSpec,
    opts: &LikOptions,
) -> Result<f64> {
    let pa = exceedance_prob_pa(model, spec, opts)?;
    censored_loglik_with_pa(model, data, spec, pa.prob, opts.jacobian)
}

/// As [`censored_loglik`] with a given exceedance probability.
///
/// Rows outside the exceedance set contribute `ln(1 − p_A)`; rows inside
/// contribute the joint log density, minus the marginal log densities when
/// `jacobian` is set.
pub fn censored_loglik_with_pa(
    model: &LaplaceFieldModel,
    data: &[Vec<f64>],
    spec: &ExceedanceSpec,
    p_a: f64,
    jacobian: bool,
) -> Result<f64> {
    let d = model.dim();
    spec.validate(d)?;
    if !(p_a > 0.0 && p_a < 1.0) {
        return Err(Error::numeric(format!(
            "exceedance probability {p_a} is degenerate"
        )));
    }
    let density = LaplaceDensity::from_factor(model.factor().clone());
    let dep = model.dep_type();
    let sigma = model.sigma();
    let scales: Vec<f64> = (0..d).map(|i| sigma[(i, i)].sqrt()).collect();
    let ln_censored = (-p_a).ln_1p();
    let term = |x: &Vec<f64>| -> Result<f64> {
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        if !spec.contains(x) {
            return Ok(ln_censored);
        }
        let joint = match dep {
            DepType::Laplace => density.logpdf(x)?,
            DepType::Gaussian => {
                let f = density.factor();
                -0.5 * (d as f64 * LN_2PI + f.log_det() + f.quad_form(x))
            }
        };
        let marg = if jacobian {
            x.iter()
                .zip(&scales)
                .map(|(&v, &s)| match dep {
                    DepType::Laplace => StdLaplace::ln_pdf(v / s) - s.ln(),
                    DepType::Gaussian => norm_ln_pdf(v / s) - s.ln(),
                })
                .sum()
        } else {
            0.0
        };
        Ok(joint - marg)
    };
    let terms: Vec<f64> = data.par_iter().map(term).collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{CorrelationSpec, Family, SiteSet};
    use crate::inference::to_margin;
    use crate::special::norm_cdf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_model(d: usize, scale: f64, dep: DepType) -> LaplaceFieldModel {
        let sites = SiteSet::new(
            (0..d).map(|i| format!("s{i}")).collect(),
            (0..d).map(|i| [i as f64, 0.3 * (i % 2) as f64]).collect(),
            vec![0.0; d],
        )
        .unwrap();
        LaplaceFieldModel::new(sites, CorrelationSpec::isotropic(Family::Exponential, scale, 1.0), dep).unwrap()
    }

    #[test]
    fn pa_univariate() {
        let m = line_model(1, 1.0, DepType::Laplace);
        for kind in [ExceedanceKind::Max, ExceedanceKind::Min, ExceedanceKind::Sum, ExceedanceKind::Marginal] {
            let p = exceedance_prob_pa(&m, &ExceedanceSpec::new(kind, 1.0), &LikOptions::default()).unwrap();
            assert!((p.prob - 0.5 * (-1f64).exp()).abs() < 1e-8 * p.prob, "{kind:?} {p:?}");
        }
    }

    #[test]
    fn pa_independent_pair() {
        let m = line_model(2, 1e-6, DepType::Laplace);
        for u in [0.5, 1.0, 3.0] {
            let p = exceedance_prob_pa(&m, &ExceedanceSpec::new(ExceedanceKind::Max, u), &LikOptions::default()).unwrap();
            // Laplace components with Σ = I are uncorrelated, not independent
            let mc = exceedance_prob_mc(&m, &ExceedanceSpec::new(ExceedanceKind::Max, u), 400_000, 3).unwrap();
            assert!((p.prob - mc.prob).abs() < 3.5 * mc.error, "{u}: {p:?} {mc:?}");
        }
        let g = line_model(2, 1e-6, DepType::Gaussian);
        let u = 1.0;
        let p = exceedance_prob_pa(&g, &ExceedanceSpec::new(ExceedanceKind::Max, u), &LikOptions::default()).unwrap();
        let q = norm_cdf(u);
        assert!((p.prob - (1.0 - q * q)).abs() < 1e-4 * p.prob, "{p:?}");
    }

    #[test]
    fn pa_quadrature_matches_mc() {
        let m = line_model(5, 2.0, DepType::Laplace);
        for kind in [ExceedanceKind::Max, ExceedanceKind::Min] {
            let s = ExceedanceSpec::new(kind, 1.5);
            let p = exceedance_prob_pa(&m, &s, &LikOptions::default()).unwrap();
            let mc = exceedance_prob_mc(&m, &s, 1_000_000, 17).unwrap();
            assert!((p.prob - mc.prob).abs() < 3.0 * mc.error, "{kind:?} {p:?} {mc:?}");
        }
    }

    #[test]
    fn all_censored() {
        let m = line_model(3, 1.0, DepType::Laplace);
        let s = ExceedanceSpec::new(ExceedanceKind::Max, 2.0);
        let data = vec![vec![0.0, 0.1, -1.0]; 7];
        let pa = exceedance_prob_pa(&m, &s, &LikOptions::default()).unwrap().prob;
        let ll = censored_loglik(&m, &data, &s, &LikOptions::default()).unwrap();
        assert!((ll - 7.0 * (1.0 - pa).ln()).abs() < 1e-12);
    }

    #[test]
    fn univariate_hand_formula() {
        let s = ExceedanceSpec::new(ExceedanceKind::Max, 1.0);
        let data = vec![vec![0.3], vec![1.7], vec![-2.0], vec![4.0]];
        let p = 0.5 * (-1f64).exp();
        let lap = line_model(1, 1.0, DepType::Laplace);
        let hand = 2.0 * (1.0 - p).ln() + StdLaplace::ln_pdf(1.7) + StdLaplace::ln_pdf(4.0);
        let ll = censored_loglik_with_pa(&lap, &data, &s, p, false).unwrap();
        assert!((ll - hand).abs() < 1e-10);
        let ll = censored_loglik_with_pa(&lap, &data, &s, p, true).unwrap();
        assert!((ll - 2.0 * (1.0 - p).ln()).abs() < 1e-10);
        let gau = line_model(1, 1.0, DepType::Gaussian);
        let pg = norm_sf(1.0);
        let hand = 2.0 * (1.0 - pg).ln() + norm_ln_pdf(1.7) + norm_ln_pdf(4.0);
        let ll = censored_loglik(&gau, &data, &s, &LikOptions { jacobian: false, ..LikOptions::default() }).unwrap();
        assert!((ll - hand).abs() < 1e-10);
    }

    #[test]
    fn degenerate_pa_is_error() {
        let m = line_model(2, 1.0, DepType::Laplace);
        let s = ExceedanceSpec::new(ExceedanceKind::Max, 1.0);
        assert!(censored_loglik_with_pa(&m, &[vec![0.0, 0.0]], &s, 0.0, true).is_err());
        assert!(censored_loglik_with_pa(&m, &[vec![0.0, 0.0]], &s, 1.0, true).is_err());
    }

    #[test]
    fn types_comparable_with_jacobian() {
        let truth = line_model(4, 1.5, DepType::Laplace);
        let x = truth.simulate_seeded(2, 3000);
        let unif: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|&v| StdLaplace::cdf(v)).collect()).collect();
        let mut diffs = [0.0; 2];
        for (k, jac) in [true, false].into_iter().enumerate() {
            let opts = LikOptions { jacobian: jac, ..LikOptions::fast() };
            let mut ll = [0.0; 2];
            for (i, dep) in [DepType::Laplace, DepType::Gaussian].into_iter().enumerate() {
                let m = line_model(4, 1.5, dep);
                let z = to_margin(&unif, dep).unwrap();
                let u = match dep {
                    DepType::Laplace => StdLaplace::quantile(0.95).unwrap(),
                    DepType::Gaussian => crate::special::norm_ppf(0.95),
                };
                ll[i] = censored_loglik(&m, &z, &ExceedanceSpec::new(ExceedanceKind::Max, u), &opts).unwrap();
                assert!(ll[i].is_finite());
            }
            diffs[k] = ll[0] - ll[1];
        }
        assert!(diffs[0] > 0.0, "{diffs:?}");
        assert!((diffs[0] - diffs[1]).abs() > 1.0, "{diffs:?}");
    }

    #[test]
    fn truth_beats_perturbed_scale() {
        let s0 = 2.0;
        let mut wins = 0;
        let reps = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..reps {
            let truth = line_model(5, s0, DepType::Laplace);
            let x = truth.simulate_seeded(rng.gen(), 1500);
            let s = ExceedanceSpec::new(ExceedanceKind::Max, StdLaplace::quantile(0.95).unwrap());
            let a = censored_loglik(&truth, &x, &s, &LikOptions::fast()).unwrap();
            let b = censored_loglik(&line_model(5, 1.5 * s0, DepType::Laplace), &x, &s, &LikOptions::fast()).unwrap();
            wins += (a >= b) as usize;
        }
        assert!(wins >= 18, "{wins}/{reps}");
    }
}
