//! Joint exceedance probabilities, return periods and return levels over a
//! set of prediction sites.

use serde::{Deserialize, Serialize};

use crate::covariance::SiteSet;
use crate::dist::{StdLaplace, WeibullTail};
use crate::error::{Error, Result};
use crate::field::{mixture_cdf, DepType, LaplaceFieldModel, MixtureOptions};
use crate::mvn::{MvnOptions, MvnPlan};
use crate::special::{norm_isf, norm_sf};

/// Return periods beyond this many years are reported as capped.
pub const RETURN_PERIOD_CAP: f64 = 1e12;

/// Weibull tail margins on the original scale, with the map to and from
/// the standard margin of a dependence type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    pub tail: WeibullTail,
}

impl MarginalModel {
    pub fn new(tail: WeibullTail) -> Self {
        Self { tail }
    }

    pub fn survival(&self, x: f64, covariate: f64) -> f64 {
        self.tail.survival(x, covariate)
    }

    /// Standard-margin value with the same survival probability as `x`.
    pub fn to_standard(&self, x: f64, covariate: f64, dep: DepType) -> Result<f64> {
        let s = self.survival(x, covariate);
        if !(s > 0.0) {
            return Ok(f64::INFINITY);
        }
        if s >= 1.0 {
            return Ok(f64::NEG_INFINITY);
        }
        match dep {
            DepType::Laplace => StdLaplace::inverse_survival(s),
            DepType::Gaussian => Ok(norm_isf(s)),
        }
    }

    /// Inverse of [`MarginalModel::to_standard`].
    pub fn from_standard(&self, z: f64, covariate: f64, dep: DepType) -> Result<f64> {
        let s = match dep {
            DepType::Laplace => StdLaplace::survival(z),
            DepType::Gaussian => norm_sf(z),
        };
        if s >= 1.0 {
            return Ok(0.0);
        }
        self.tail.inverse_survival(s, covariate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskOptions {
    pub mixture: MixtureOptions,
    pub days_per_year: f64,
    /// Return-level bisection stops at this bracket width (m/s).
    pub level_tol: f64,
}

impl Default for RiskOptions {
    fn default() -> Self {
        Self {
            mixture: MixtureOptions {
                rel_tol: 1e-5,
                node_rel_tol: Some(1e-2),
                ..MixtureOptions::default()
            },
            days_per_year: 365.25,
            level_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExceedProb {
    pub prob: f64,
    pub quadrature_error: f64,
    pub mvn_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskReport {
    pub level: f64,
    pub period_years: f64,
    /// `period_years` is [`RETURN_PERIOD_CAP`] and the true period is larger.
    pub capped: bool,
    pub grid_size: usize,
    pub quadrature_error: f64,
    pub mvn_error: f64,
}

/// Fitted dependence on a prediction grid together with margins; the
/// grid correlation matrix and its normal-cdf plan are built once.
pub struct RiskEngine {
    model: LaplaceFieldModel,
    margins: MarginalModel,
    plan: MvnPlan,
    opts: RiskOptions,
}

impl RiskEngine {
    pub fn new(model: &LaplaceFieldModel, margins: MarginalModel, grid: SiteSet, opts: RiskOptions) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::domain("empty prediction grid"));
        }
        let model = model.on_sites(grid)?;
        let b = vec![1.0; model.dim()];
        let plan = MvnPlan::new(model.sigma(), &b)?;
        Ok(Self {
            model,
            margins,
            plan,
            opts,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &LaplaceFieldModel {
        &self.model
    }

    fn bounds(&self, x0: f64) -> Result<Vec<f64>> {
        let dep = self.model.dep_type();
        self.model
            .sites()
            .covariate()
            .iter()
            .map(|&c| self.margins.to_standard(x0, c, dep))
            .collect()
    }

    /// Probability that the level `x0` is exceeded at one or more grid sites
    /// on a given day.
    pub fn joint_exceed_prob(&self, x0: f64) -> Result<ExceedProb> {
        if !(x0 > 0.0) || !x0.is_finite() {
            return Err(Error::domain(format!("level must be > 0, got {x0}")));
        }
        let b = self.bounds(x0)?;
        let sigma = self.model.sigma();
        let scales: Vec<f64> = (0..b.len()).map(|i| sigma[(i, i)].sqrt()).collect();
        match self.model.dep_type() {
            DepType::Laplace => {
                let r = mixture_cdf(&self.plan, &scales, &b, &self.opts.mixture)?;
                Ok(ExceedProb {
                    prob: r.complement,
                    quadrature_error: r.quad_error,
                    mvn_error: r.mvn_error,
                })
            }
            DepType::Gaussian => {
                if b.len() == 1 {
                    return Ok(ExceedProb {
                        prob: norm_sf(b[0]),
                        quadrature_error: 0.0,
                        mvn_error: 0.0,
                    });
                }
                let o = MvnOptions {
                    abs_tol: 0.0,
                    rel_tol: self.opts.mixture.node_rel_tol.unwrap_or(self.opts.mixture.rel_tol),
                    ..self.opts.mixture.mvn
                };
                let r = self.plan.cdf(&b, &o)?;
                Ok(ExceedProb {
                    prob: r.complement,
                    quadrature_error: 0.0,
                    mvn_error: r.error,
                })
            }
        }
    }

    /// `1/(days_per_year · p)`, capped at [`RETURN_PERIOD_CAP`].
    pub fn return_period(&self, x0: f64) -> Result<RiskReport> {
        let p = self.joint_exceed_prob(x0)?;
        let years = 1.0 / (self.opts.days_per_year * p.prob);
        let capped = !(years <= RETURN_PERIOD_CAP);
        Ok(RiskReport {
            level: x0,
            period_years: if capped { RETURN_PERIOD_CAP } else { years },
            capped,
            grid_size: self.grid_size(),
            quadrature_error: p.quadrature_error,
            mvn_error: p.mvn_error,
        })
    }

    /// Level whose return period is `years`, by bisection.
    ///
    /// The bracket comes from single-site levels: the grid period never
    /// exceeds any single-site period, and by the union bound it is at
    /// least the single-site period for `years·D`.
    pub fn return_level(&self, years: f64) -> Result<RiskReport> {
        if !(years > 0.0) || !years.is_finite() {
            return Err(Error::domain(format!("return period must be > 0, got {years}")));
        }
        let d = self.grid_size() as f64;
        let per_day = |t: f64| 1.0 / (self.opts.days_per_year * t);
        let single = |s: f64| -> Result<f64> {
            let mut m = f64::NEG_INFINITY;
            for &c in self.model.sites().covariate() {
                m = m.max(self.margins.tail.inverse_survival(s, c)?);
            }
            Ok(m)
        };
        let p_target = per_day(years);
        if !(p_target < 1.0) {
            return Err(Error::domain(format!(
                "return period {years} years is shorter than one day"
            )));
        }
        let mut lo = single(p_target)?;
        let mut hi = single(p_target / d)?;
        let eps = self.opts.level_tol;
        let (rp_lo, rp_hi) = (self.return_period(lo.max(eps))?, self.return_period(hi + eps)?);
        if rp_lo.period_years > years * (1.0 + 1e-3) || rp_hi.period_years < years * (1.0 - 1e-3) {
            return Err(Error::numeric(format!(
                "return level bracket [{lo}, {hi}] has periods [{}, {}] around {years}",
                rp_lo.period_years, rp_hi.period_years
            )));
        }
        lo = lo.max(eps);
        hi += eps;
        while hi - lo > eps {
            let mid = 0.5 * (lo + hi);
            if self.return_period(mid)?.period_years < years {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.return_period(0.5 * (lo + hi))
    }
}

/// One-off joint exceedance probability; see [`RiskEngine`] for repeated
/// evaluations.
pub fn joint_exceed_prob(
    model: &LaplaceFieldModel,
    margins: MarginalModel,
    grid: SiteSet,
    x0: f64,
    opts: RiskOptions,
) -> Result<ExceedProb> {
    RiskEngine::new(model, margins, grid, opts)?.joint_exceed_prob(x0)
}

pub fn return_period(
    model: &LaplaceFieldModel,
    margins: MarginalModel,
    grid: SiteSet,
    x0: f64,
    opts: RiskOptions,
) -> Result<RiskReport> {
    RiskEngine::new(model, margins, grid, opts)?.return_period(x0)
}

pub fn return_level(
    model: &LaplaceFieldModel,
    margins: MarginalModel,
    grid: SiteSet,
    years: f64,
    opts: RiskOptions,
) -> Result<RiskReport> {
    RiskEngine::new(model, margins, grid, opts)?.return_level(years)
}
