use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::{CorrelationSpec, Family, SiteSet};
use crate::dist::StdLaplace;
use crate::error::{Error, Result};
use crate::field::{DepType, LaplaceFieldModel};
use crate::optim::{nelder_mead, Minimum, NelderMeadOptions};
use crate::special::norm_ppf;
use crate::tail::{ExceedanceKind, ExceedanceSpec};

use super::likelihood::{censored_loglik, LikOptions};
use super::pit::to_margin;

/// Matérn smoothness values profiled when none are given.
pub const MATERN_NU_GRID: [f64; 10] = [0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 1.0, 1.5, 2.5, 5.0];

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceOptions {
    pub family: Family,
    pub dep_type: DepType,
    pub anisotropic: bool,
    /// Threshold as a probability on uniform margins.
    pub prob_u: f64,
    pub kind: ExceedanceKind,
    /// Matérn smoothness values to profile over.
    pub nu_grid: Vec<f64>,
    /// Maximum Nelder–Mead runs; runs after the first start from jittered
    /// copies of the best point so far and stop once one fails to improve.
    pub restarts: usize,
    pub max_evals: usize,
    pub lik: LikOptions,
    pub seed: u64,
}

impl Default for DependenceOptions {
    fn default() -> Self {
        Self {
            family: Family::Exponential,
            dep_type: DepType::Laplace,
            anisotropic: false,
            prob_u: 0.975,
            kind: ExceedanceKind::Max,
            nu_grid: MATERN_NU_GRID.to_vec(),
            restarts: 3,
            max_evals: 800,
            lik: LikOptions::fast(),
            seed: 0x0d15_ea5e,
        }
    }
}

/// Fitted dependence model. `aic = 2·loglik − 2·dim`, so larger is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub dep_type: DepType,
    pub anisotropic: bool,
    pub spec: CorrelationSpec,
    pub params: BTreeMap<String, f64>,
    pub loglik: f64,
    pub aic: f64,
    pub dim: usize,
    /// Matérn smoothness chosen from the grid; not counted in `dim`.
    pub nu: Option<f64>,
    pub nu_profile: Vec<(f64, f64)>,
    pub prob_u: f64,
    /// Threshold on the standard margin of the dependence type.
    pub u: f64,
    pub kind: ExceedanceKind,
    pub exceedances: usize,
    pub n: usize,
    pub evals: usize,
}

impl FitResult {
    pub fn model(&self, sites: SiteSet) -> Result<LaplaceFieldModel> {
        LaplaceFieldModel::new(sites, self.spec, self.dep_type)
    }
}

struct Layout {
    family: Family,
    anisotropic: bool,
    fixed_shape: f64,
}

impl Layout {
    fn free_shape(&self) -> bool {
        self.family == Family::Stable
    }

    fn dim(&self) -> usize {
        1 + self.free_shape() as usize + 2 * self.anisotropic as usize
    }

    fn decode(&self, x: &[f64]) -> CorrelationSpec {
        let mut k = 1;
        let shape = if self.free_shape() {
            k += 1;
            2.0 / (1.0 + (-x[1]).exp())
        } else {
            self.fixed_shape
        };
        let spec = CorrelationSpec::isotropic(self.family, x[0].exp(), shape);
        if self.anisotropic {
            spec.with_anisotropy(x[k].rem_euclid(PI), 1.0 + x[k + 1].exp())
        } else {
            spec
        }
    }

    fn start(&self, scale: f64) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![scale.ln()];
        let mut steps = vec![0.5];
        if self.free_shape() {
            // shape 1
            x.push(0.0);
            steps.push(0.5);
        }
        if self.anisotropic {
            x.extend([0.0, (1e-3f64).ln()]);
            steps.extend([0.5, 1.0]);
        }
        (x, steps)
    }

    fn params(&self, spec: &CorrelationSpec) -> BTreeMap<String, f64> {
        let mut p = BTreeMap::new();
        p.insert("scale".to_string(), spec.scale);
        if self.free_shape() {
            p.insert("shape".to_string(), spec.shape);
        }
        if self.anisotropic {
            p.insert("theta".to_string(), spec.theta);
            p.insert("b".to_string(), spec.b);
        }
        p
    }
}

/// Maximum censored-likelihood fit of the dependence model to data on
/// uniform margins (rows are time points).
pub fn fit_dependence(uniform: &[Vec<f64>], sites: &SiteSet, opts: &DependenceOptions) -> Result<FitResult> {
    if uniform.is_empty() {
        return Err(Error::domain("no observations"));
    }
    if !(opts.prob_u > 0.0 && opts.prob_u < 1.0) {
        return Err(Error::domain(format!("threshold probability must lie in (0,1), got {}", opts.prob_u)));
    }
    let z = to_margin(uniform, opts.dep_type)?;
    let u = match opts.dep_type {
        DepType::Laplace => StdLaplace::quantile(opts.prob_u)?,
        DepType::Gaussian => norm_ppf(opts.prob_u),
    };
    let spec = ExceedanceSpec::new(opts.kind, u);
    spec.validate(sites.len())?;
    let exceedances = z.iter().filter(|x| spec.contains(x)).count();

    let shapes: Vec<f64> = match opts.family {
        Family::Matern if opts.nu_grid.is_empty() => MATERN_NU_GRID.to_vec(),
        Family::Matern => opts.nu_grid.clone(),
        _ => vec![1.0],
    };
    let start_scale = match sites.median_distance() {
        d if d > 0.0 => d,
        _ => 1.0,
    };

    let mut best: Option<(Layout, Minimum)> = None;
    let mut profile = Vec::new();
    let mut evals = 0;
    let mut last_err = None;
    for &nu in &shapes {
        let layout = Layout {
            family: opts.family,
            anisotropic: opts.anisotropic,
            fixed_shape: nu,
        };
        match maximise(&layout, &z, sites, &spec, opts, start_scale) {
            Ok(m) => {
                evals += m.evals;
                profile.push((nu, -m.value));
                if best.as_ref().map_or(true, |(_, b)| m.value < b.value) {
                    best = Some((layout, m));
                }
            }
            Err(e) => {
                log::warn!("fit with shape {nu} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    let (layout, m) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or_else(|| Error::numeric("no fit attempted"))),
    };
    let fitted = layout.decode(&m.x);
    let loglik = -m.value;
    let dim = layout.dim();
    Ok(FitResult {
        family: opts.family,
        dep_type: opts.dep_type,
        anisotropic: opts.anisotropic,
        spec: fitted,
        params: layout.params(&fitted),
        loglik,
        aic: 2.0 * loglik - 2.0 * dim as f64,
        dim,
        nu: (opts.family == Family::Matern).then_some(fitted.shape),
        nu_profile: if opts.family == Family::Matern { profile } else { Vec::new() },
        prob_u: opts.prob_u,
        u,
        kind: opts.kind,
        exceedances,
        n: z.len(),
        evals,
    })
}

fn maximise(
    layout: &Layout,
    z: &[Vec<f64>],
    sites: &SiteSet,
    spec: &ExceedanceSpec,
    opts: &DependenceOptions,
    start_scale: f64,
) -> Result<Minimum> {
    let objective = |x: &[f64]| -> f64 {
        let cs = layout.decode(x);
        if cs.validate().is_err() {
            return f64::INFINITY;
        }
        LaplaceFieldModel::new(sites.clone(), cs, opts.dep_type)
            .and_then(|m| censored_loglik(&m, z, spec, &opts.lik))
            .map(|ll| -ll)
            .unwrap_or(f64::INFINITY)
    };
    let (x0, steps) = layout.start(start_scale);
    let mut nm = NelderMeadOptions::new(steps.clone());
    nm.max_evals = opts.max_evals;
    nm.f_tol = 1e-8;
    nm.x_tol = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Minimum> = None;
    let mut any_converged = false;
    let mut evals = 0;
    for r in 0..opts.restarts.max(1) {
        let start: Vec<f64> = match (&best, r) {
            (Some(b), r) if r > 0 => b
                .x
                .iter()
                .zip(&steps)
                .map(|(v, s)| v + 0.2 * s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            _ => x0.clone(),
        };
        let m = match nelder_mead(objective, &start, &nm) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("restart {r} failed: {e}");
                continue;
            }
        };
        evals += m.evals;
        any_converged |= m.converged;
        let improved = best
            .as_ref()
            .map_or(f64::INFINITY, |b| b.value - m.value);
        if improved > 0.0 {
            best = Some(m);
        }
        // A converged restart that lands back on the incumbent ends the search.
        if r > 0 && any_converged && improved <= 1e-6 * (1.0 + best.as_ref().map_or(0.0, |b| b.value.abs())) {
            break;
        }
    }
    let mut best = best.ok_or_else(|| Error::Convergence {
        message: "objective not finite at any start".into(),
        best: x0.clone(),
        best_value: f64::INFINITY,
    })?;
    if !any_converged {
        return Err(Error::Convergence {
            message: format!("Nelder-Mead budget of {} evaluations exhausted", opts.max_evals),
            best: best.x,
            best_value: best.value,
        });
    }
    best.evals = evals;
    best.converged = true;
    Ok(best)
}
