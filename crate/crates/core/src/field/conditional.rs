//! Conditional laws: the mixing variable given an observed vector, and the
//! remaining coordinates given an observed subvector.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ln_qk, LaplaceFieldModel, LN_2PI};
use crate::error::{Error, Result};
use crate::linalg::Factor;
use crate::mvn::split_blocks;
use crate::special::ln_gamma;

const GRID: usize = 2048;

/// Law of `Y` given `X = x` in dimension `d`, through `c = x'Σ⁻¹x`:
/// density `y^{−(d−1)} exp(−½[y² + c/y²]) / (c^{ν/2} K_ν(√c))`,
/// `ν = 1 − d/2`.
#[derive(Debug, Clone)]
pub struct YGivenX {
    d: usize,
    c: f64,
    ln_norm: f64,
}

impl YGivenX {
    pub fn new(d: usize, c: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("dimension must be >= 1"));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::domain(format!("quadratic form must be finite and >= 0, got {c}")));
        }
        if d > 1 && c <= 1e-300 {
            return Err(Error::domain(
                "conditioning on the origin: the mixing law is improper for d > 1",
            ));
        }
        let nu = 1.0 - 0.5 * d as f64;
        Ok(Self {
            d,
            c,
            ln_norm: -ln_qk(nu, c)?,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Log of the normalising constant `c(x, Σ)` relative to the kernel.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_norm
    }

    fn ln_kernel(&self, y: f64) -> f64 {
        -((self.d - 1) as f64) * y.ln() - 0.5 * (y * y + self.c / (y * y))
    }

    pub fn logpdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_norm + self.ln_kernel(y)
    }

    /// `y² = (−(d−1) + √((d−1)² + 4c))/2`.
    pub fn mode(&self) -> f64 {
        let a = (self.d - 1) as f64;
        (0.5 * (-a + (a * a + 4.0 * self.c).sqrt())).sqrt()
    }

    /// Inverse-cdf sampler on a log-spaced grid.
    pub fn tabulate(&self) -> Result<YTable> {
        YTable::new(self)
    }
}

/// Log-density of `Y | X = x` at `y`, with `Σ` the dispersion matrix.
pub fn y_given_x_logpdf(sigma: &DMatrix<f64>, x: &[f64], y: f64) -> Result<f64> {
    let f = Factor::with_jitter(sigma)?;
    if x.len() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: x.len(),
        });
    }
    Ok(YGivenX::new(f.dim(), f.quad_form(x))?.logpdf(y))
}

/// Tabulated cdf of `Y | X₁ = x₁` over `s = ln y`.
#[derive(Debug, Clone)]
pub struct YTable {
    s: Vec<f64>,
    cdf: Vec<f64>,
}

impl YTable {
    fn new(law: &YGivenX) -> Result<Self> {
        // Log-density of S = ln Y up to a constant.
        let h = |s: f64| law.ln_kernel(s.exp()) + s;
        let d = law.d as f64;
        let t = (2.0 - d) + ((2.0 - d).powi(2) + 4.0 * law.c).sqrt();
        let s_mode = if t > 0.0 { 0.25 * (0.5 * t).ln() } else { 0.0 };
        let pivot = law.c.powf(0.25).max(s_mode.exp());
        let step = 50f64.ln();
        let (mut lo, mut hi) = (pivot.ln() - step, pivot.ln() + step);
        let peak = h(s_mode);
        let cut = peak + 1e-12f64.ln();
        let mut tries = 0;
        while h(lo) > cut || h(hi) > cut {
            if h(lo) > cut {
                lo -= step;
            }
            if h(hi) > cut {
                hi += step;
            }
            tries += 1;
            if tries > 40 {
                return Err(Error::numeric(format!(
                    "conditional mixing density not contained in [{:e}, {:e}] (c = {:e})",
                    lo.exp(),
                    hi.exp(),
                    law.c
                )));
            }
        }
        let s: Vec<f64> = (0..GRID)
            .map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64)
            .collect();
        let dens: Vec<f64> = s.iter().map(|&v| (h(v) - peak).exp()).collect();
        let mut cdf = vec![0.0; GRID];
        for i in 1..GRID {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (s[i] - s[i - 1]);
        }
        let total = cdf[GRID - 1];
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::numeric("conditional mixing density tabulation failed"));
        }
        cdf.iter_mut().for_each(|v| *v /= total);
        Ok(Self { s, cdf })
    }

    /// Inverse cdf at `p ∈ [0, 1]`, linear in `ln y` within grid cells.
    pub fn quantile(&self, p: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < p).clamp(1, GRID - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.5 };
        (self.s[i - 1] + w.clamp(0.0, 1.0) * (self.s[i] - self.s[i - 1])).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }
}

/// Law of `X₂ | X₁ = x₁` for a Laplace vector with dispersion `Σ`.
///
/// Elliptical with location `μ̃ = Σ₂₁Σ₁₁⁻¹x₁`, dispersion `Σ̃ = Σ₂₂ −
/// Σ₂₁Σ₁₁⁻¹Σ₁₂` and radial part driven by `c₁ = x₁'Σ₁₁⁻¹x₁`. Samples are
/// `μ̃ + ỹ·L̃z` with `ỹ` from `Y | X₁ = x₁`.
#[derive(Debug, Clone)]
pub struct ConditionalLaw {
    free: Vec<usize>,
    mean: Vec<f64>,
    cov: Factor,
    c1: f64,
    d: usize,
    y: YGivenX,
}

impl ConditionalLaw {
    pub fn new(sigma: &DMatrix<f64>, cond_idx: &[usize], x1: &[f64]) -> Result<Self> {
        let (free, s11) = split_blocks(sigma, cond_idx)?;
        if x1.len() != cond_idx.len() {
            return Err(Error::Dimension {
                expected: cond_idx.len(),
                got: x1.len(),
            });
        }
        let f11 = Factor::new(&s11)
            .map_err(|_| Error::Singular("conditioning block of the dispersion matrix".into()))?;
        let c1 = f11.quad_form(x1);
        let (mean, cov) = crate::mvn::gauss_conditional(sigma, cond_idx, x1)?;
        let cov = Factor::with_jitter(&cov)?;
        let d = cond_idx.len();
        let y = YGivenX::new(d, c1)?;
        Ok(Self {
            free,
            mean,
            cov,
            c1,
            d,
            y,
        })
    }

    /// Indices of the free coordinates, in output order.
    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn mixing(&self) -> &YGivenX {
        &self.y
    }

    fn m(&self) -> usize {
        self.free.len()
    }

    /// `ln g(t)` with `t` the squared radius of `L̃⁻¹(x₂ − μ̃)`; the
    /// density is `|Σ̃|^{−1/2} g(t)`.
    fn ln_g(&self, t: f64) -> Result<f64> {
        let m = self.m() as f64;
        let total = (self.d + self.m()) as f64;
        Ok(-0.5 * m * LN_2PI + ln_qk(1.0 - 0.5 * total, self.c1 + t)?
            - ln_qk(1.0 - 0.5 * self.d as f64, self.c1)?)
    }

    pub fn logpdf(&self, x2: &[f64]) -> Result<f64> {
        if x2.len() != self.m() {
            return Err(Error::Dimension {
                expected: self.m(),
                got: x2.len(),
            });
        }
        let r: Vec<f64> = x2.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let t = self.cov.quad_form(&r);
        Ok(-0.5 * self.cov.log_det() + self.ln_g(t)?)
    }

    /// Density of the radius `R̃ = ‖L̃⁻¹(X₂ − μ̃)‖`:
    /// `s_m r^{m−1} g(r²)` with `s_m = 2π^{m/2}/Γ(m/2)`.
    pub fn radial_pdf(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::domain("radius must be >= 0"));
        }
        let m = self.m() as f64;
        if r == 0.0 {
            return Ok(if self.m() == 1 {
                (2f64.ln() + self.ln_g(0.0)?).exp()
            } else {
                0.0
            });
        }
        let ln_s = 2f64.ln() + 0.5 * m * std::f64::consts::PI.ln() - ln_gamma(0.5 * m);
        Ok((ln_s + (m - 1.0) * r.ln() + self.ln_g(r * r)?).exp())
    }

    /// Draws `n` vectors over the free coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<Vec<f64>>> {
        let table = self.y.tabulate()?;
        let m = self.m();
        let mut z = vec![0.0; m];
        Ok((0..n)
            .map(|_| {
                let y = table.sample(rng);
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let lz = self.cov.mul_lower(&z);
                self.mean.iter().zip(&lz).map(|(mu, e)| mu + y * e).collect()
            })
            .collect())
    }
}

/// `n` draws of the sites outside `cond_idx` given `X₁ = x₁`, in
/// increasing site order.
pub fn simulate_conditional<R: Rng + ?Sized>(
    model: &LaplaceFieldModel,
    cond_idx: &[usize],
    x1: &[f64],
    rng: &mut R,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    match model.dep_type() {
        super::DepType::Laplace => ConditionalLaw::new(model.sigma(), cond_idx, x1)?.sample(rng, n),
        super::DepType::Gaussian => {
            let (mean, cov) = crate::mvn::gauss_conditional(model.sigma(), cond_idx, x1)?;
            let f = Factor::with_jitter(&cov)?;
            Ok(crate::mvn::mvn_sample(rng, &f, n)
                .into_iter()
                .map(|v| v.iter().zip(&mean).map(|(a, b)| a + b).collect())
                .collect())
        }
    }
}

/// Log-density of `X₂ | X₁ = x₁`.
pub fn conditional_logpdf(
    sigma: &DMatrix<f64>,
    cond_idx: &[usize],
    x1: &[f64],
    x2: &[f64],
) -> Result<f64> {
    ConditionalLaw::new(sigma, cond_idx, x1)?.logpdf(x2)
}
