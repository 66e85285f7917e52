//! The Laplace field `X = Y·W`: density, radial law, simulation,
//! conditional laws and the mixture integral for joint cdfs.

mod conditional;
mod mixture;

pub use conditional::{
    conditional_logpdf, simulate_conditional, y_given_x_logpdf, ConditionalLaw, YGivenX,
};
pub use mixture::{mv_laplace_cdf, mixture_cdf, MixtureOptions, MixtureResult};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{build_corr_factor, CorrelationSpec, SiteSet};
use crate::dist::rayleigh_draw;
use crate::error::{Error, Result};
use crate::linalg::Factor;
use crate::special::{ln_gamma, log_bessel_k};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Dependence type: Laplace field or its Gaussian comparator built on the
/// same correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepType {
    Laplace,
    Gaussian,
}

impl std::str::FromStr for DepType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "laplace" | "l" => Ok(DepType::Laplace),
            "gaussian" | "g" => Ok(DepType::Gaussian),
            other => Err(Error::domain(format!("unknown dependence type {other:?}"))),
        }
    }
}

impl std::fmt::Display for DepType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DepType::Laplace => "laplace",
            DepType::Gaussian => "gaussian",
        })
    }
}

/// Correlation spec, sites and the cached correlation matrix `Σ*` with its
/// Cholesky factor.
#[derive(Debug, Clone)]
pub struct LaplaceFieldModel {
    spec: CorrelationSpec,
    sites: SiteSet,
    sigma: DMatrix<f64>,
    factor: Factor,
    dep_type: DepType,
}

impl LaplaceFieldModel {
    pub fn new(sites: SiteSet, spec: CorrelationSpec, dep_type: DepType) -> Result<Self> {
        let (sigma, factor) = build_corr_factor(&sites, &spec)?;
        Ok(Self {
            spec,
            sites,
            sigma,
            factor,
            dep_type,
        })
    }

    pub fn spec(&self) -> &CorrelationSpec {
        &self.spec
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    pub fn dep_type(&self) -> DepType {
        self.dep_type
    }

    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    /// `ν = 1 − D/2`.
    pub fn nu(&self) -> f64 {
        1.0 - 0.5 * self.dim() as f64
    }

    /// Same spec and type on other sites (e.g. a prediction grid).
    pub fn on_sites(&self, sites: SiteSet) -> Result<Self> {
        Self::new(sites, self.spec, self.dep_type)
    }

    /// `n` draws on standard margins: `Y·W` for the Laplace type, `W` for
    /// the Gaussian type.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// Parallel simulation; replicate `i` uses its own ChaCha8 stream of
    /// `seed`, so output does not depend on the thread count.
    pub fn simulate_seeded(&self, seed: u64, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                self.draw(&mut rng)
            })
            .collect()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let w = self.factor.mul_lower(&z);
        match self.dep_type {
            DepType::Gaussian => w,
            DepType::Laplace => {
                let y = rayleigh_draw(rng);
                w.into_iter().map(|v| y * v).collect()
            }
        }
    }
}

/// `(ν/2)·ln q + ln K_ν(√q)`, with its limit at `q = 0` when `ν > 0`.
pub(crate) fn ln_qk(nu: f64, q: f64) -> Result<f64> {
    if q > 0.0 {
        return Ok(0.5 * nu * q.ln() + log_bessel_k(nu, q.sqrt())?);
    }
    if q == 0.0 && nu > 0.0 {
        return Ok(ln_gamma(nu) + (nu - 1.0) * std::f64::consts::LN_2);
    }
    Err(Error::domain(
        "Laplace density is singular at the origin for D > 1",
    ))
}

/// Multivariate Laplace density with dispersion `Σ`, factor cached.
#[derive(Debug, Clone)]
pub struct LaplaceDensity {
    factor: Factor,
}

impl LaplaceDensity {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            factor: Factor::with_jitter(sigma)?,
        })
    }

    pub fn from_factor(factor: Factor) -> Self {
        Self { factor }
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    /// Log-density as a function of the quadratic form `q = x'Σ⁻¹x`.
    pub fn logpdf_q(&self, q: f64) -> Result<f64> {
        let d = self.dim() as f64;
        if d > 1.0 && q <= 1e-300 {
            return Err(Error::domain(
                "Laplace density is singular at the origin for D > 1",
            ));
        }
        let nu = 1.0 - 0.5 * d;
        Ok(-0.5 * d * LN_2PI - 0.5 * self.factor.log_det() + ln_qk(nu, q)?)
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.logpdf_q(self.factor.quad_form(x))
    }
}

/// Log-density of the `D`-variate Laplace law with dispersion `Σ` at `x`:
/// `−(D/2)ln 2π − ½ln|Σ| + (ν/2)ln q + ln K_ν(√q)`, `q = x'Σ⁻¹x`,
/// `ν = 1 − D/2`.
///
/// Errors at the origin when `D > 1`, where the density is infinite.
pub fn mv_laplace_logpdf(sigma: &DMatrix<f64>, x: &[f64]) -> Result<f64> {
    LaplaceDensity::new(sigma)?.logpdf(x)
}

/// Density of `R = ‖L⁻¹X‖` in dimension `D`:
/// `2^{1−D/2}/Γ(D/2) · r^{D/2} · K_{D/2−1}(r)`.
pub fn radial_pdf(d: usize, r: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::domain("dimension must be >= 1"));
    }
    if !(r > 0.0) {
        return if r == 0.0 && d == 1 {
            Ok(1.0)
        } else if r == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::domain(format!("radial density needs r >= 0, got {r}")))
        };
    }
    if r.is_infinite() {
        return Ok(0.0);
    }
    let h = 0.5 * d as f64;
    let ln = (1.0 - h) * std::f64::consts::LN_2 - ln_gamma(h) + h * r.ln() + log_bessel_k(h - 1.0, r)?;
    Ok(ln.exp())
}
