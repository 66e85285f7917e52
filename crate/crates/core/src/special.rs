//! Special functions: modified Bessel function of the third kind and
//! standard normal helpers.
//!
//! `K_ν(x)` is evaluated for the fractional order `μ = ν - round(ν)` with
//! Temme's series (`x ≤ 2`), Steed's continued fraction (`2 < x ≤ 30`) or
//! the Hankel asymptotic expansion (`x > 30`), then carried to `ν` by
//! forward recurrence. Everything runs on the `e^x`-scaled values, and the
//! recurrence renormalises on the fly, so [`log_bessel_k`] stays finite far
//! outside the range where `K_ν` itself is representable.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const G1_DAT: [f64; 14] = [
    -1.145_164_083_662_683_1,
    0.006_360_853_113_470_842,
    0.001_862_451_930_072_068_5,
    0.000_152_833_085_873_453_5,
    0.000_017_017_464_011_802_04,
    -6.459_750_292_334_725e-7,
    -5.181_984_843_251_938e-8,
    4.518_909_289_485_818e-10,
    3.243_322_737_102_087e-11,
    6.830_943_402_494_752e-13,
    2.835_350_275_517_210e-14,
    -7.988_390_576_932_359e-16,
    -3.372_667_730_077_195e-17,
    -3.658_633_480_921_052e-20,
];

const G2_DAT: [f64; 15] = [
    1.882_645_524_949_671_8,
    -0.077_490_658_396_167_52,
    -0.018_256_714_847_324_93,
    0.000_633_803_020_907_489_6,
    0.000_076_229_054_350_872_9,
    -9.550_164_756_172_044e-7,
    -8.892_726_810_788_635e-8,
    -1.952_133_477_231_961_4e-9,
    -9.400_305_273_588_516e-11,
    4.687_513_384_953_239e-12,
    2.265_853_574_692_576e-13,
    -1.172_550_969_848_801_5e-15,
    -7.044_133_820_024_522e-17,
    -2.437_787_831_010_769_4e-18,
    -7.522_524_321_825_390e-20,
];

/// Clenshaw evaluation of a Chebyshev series on [-1, 1].
fn cheb_eval(coeffs: &[f64], x: f64) -> f64 {
    let y2 = 2.0 * x;
    let (mut d, mut dd) = (0.0, 0.0);
    for &c in coeffs[1..].iter().rev() {
        let tmp = d;
        d = y2 * d - dd + c;
        dd = tmp;
    }
    x * d - dd + 0.5 * coeffs[0]
}

/// Returns `(1/Γ(1+ν), 1/Γ(1-ν), g1, g2)` for `|ν| ≤ 0.5`.
fn temme_gamma(nu: f64) -> (f64, f64, f64, f64) {
    let x = 4.0 * nu.abs() - 1.0;
    let g1 = cheb_eval(&G1_DAT, x);
    let g2 = cheb_eval(&G2_DAT, x);
    (1.0 / (g2 - nu * g1), 1.0 / (g2 + nu * g1), g1, g2)
}

/// Temme series for `(e^x K_μ(x), e^x K_{μ+1}(x))`, `|μ| ≤ 0.5`, small `x`.
fn k_scaled_temme(mu: f64, x: f64) -> (f64, f64) {
    let half_x = 0.5 * x;
    let ln_half_x = half_x.ln();
    let half_x_nu = (mu * ln_half_x).exp();
    let pi_nu = PI * mu;
    let sigma = -mu * ln_half_x;
    let sinrat = if pi_nu.abs() < f64::EPSILON {
        1.0
    } else {
        pi_nu / pi_nu.sin()
    };
    let sinhrat = if sigma.abs() < f64::EPSILON {
        1.0
    } else {
        sigma.sinh() / sigma
    };
    let ex = x.exp();
    let (g_1pnu, g_1mnu, g1, g2) = temme_gamma(mu);

    let mut fk = sinrat * (sigma.cosh() * g1 - sinhrat * ln_half_x * g2);
    let mut pk = 0.5 / half_x_nu * g_1pnu;
    let mut qk = 0.5 * half_x_nu * g_1mnu;
    let mut ck = 1.0;
    let mut sum0 = fk;
    let mut sum1 = pk;
    for k in 1..15_000 {
        let k = k as f64;
        fk = (k * fk + pk + qk) / (k * k - mu * mu);
        ck *= half_x * half_x / k;
        pk /= k - mu;
        qk /= k + mu;
        let hk = -k * fk + pk;
        let del0 = ck * fk;
        sum0 += del0;
        sum1 += ck * hk;
        if del0.abs() < 0.5 * sum0.abs() * f64::EPSILON {
            break;
        }
    }
    (sum0 * ex, sum1 * 2.0 / x * ex)
}

/// Steed's continued fraction for `(e^x K_μ(x), e^x K_{μ+1}(x))`, `x ≥ 2`.
fn k_scaled_steed(mu: f64, x: f64) -> (f64, f64) {
    let mut bi = 2.0 * (1.0 + x);
    let mut di = 1.0 / bi;
    let mut delhi = di;
    let mut hi = di;
    let mut qi = 0.0;
    let mut qip1 = 1.0;
    let mut ai = -(0.25 - mu * mu);
    let a1 = ai;
    let mut ci = -ai;
    let mut bqi = -ai;
    let mut s = 1.0 + bqi * delhi;
    for i in 2..10_000 {
        ai -= 2.0 * (i - 1) as f64;
        ci = -ai * ci / i as f64;
        let tmp = (qi - bi * qip1) / ai;
        qi = qip1;
        qip1 = tmp;
        bqi += ci * qip1;
        bi += 2.0;
        di = 1.0 / (bi + ai * di);
        delhi = (bi * di - 1.0) * delhi;
        hi += delhi;
        let dels = bqi * delhi;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    hi *= -a1;
    let k_mu = (PI / (2.0 * x)).sqrt() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - hi) / x;
    (k_mu, k_mu1)
}

/// Hankel expansion of `e^x K_ν(x)`; accurate to rounding for `x > 30`
/// and the small orders used here.
fn k_scaled_asymptotic(nu: f64, x: f64) -> f64 {
    let four_nu2 = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = term * (four_nu2 - odd * odd) / (8.0 * k as f64 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    (PI / (2.0 * x)).sqrt() * sum
}

fn k_scaled_pair(mu: f64, x: f64) -> (f64, f64) {
    if x <= 2.0 {
        k_scaled_temme(mu, x)
    } else if x <= 30.0 {
        k_scaled_steed(mu, x)
    } else {
        (k_scaled_asymptotic(mu, x), k_scaled_asymptotic(mu + 1.0, x))
    }
}

/// Natural logarithm of `K_ν(x)`.
///
/// Finite for every real order and every `x > 0` whose result fits in an
/// `f64` exponent, e.g. `log K_{14}(1e-3)` or `log K_0(1e5)`.
pub fn log_bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("bessel_k requires x > 0, got {x}")));
    }
    if !nu.is_finite() {
        return Err(Error::domain(format!("bessel_k order must be finite, got {nu}")));
    }
    let nu = nu.abs();
    let steps = (nu + 0.5).floor();
    let mu = nu - steps;
    let (k_mu, k_mu1) = k_scaled_pair(mu, x);
    if steps == 0.0 {
        return Ok(k_mu.ln() - x);
    }
    let mut log_scale = 0.0;
    let (mut prev, mut cur) = (k_mu, k_mu1);
    for i in 1..steps as usize {
        let next = prev + 2.0 * (mu + i as f64) / x * cur;
        prev = cur;
        cur = next;
        if cur > 1e250 {
            prev /= cur;
            log_scale += cur.ln();
            cur = 1.0;
        }
    }
    Ok(cur.ln() + log_scale - x)
}

/// Modified Bessel function of the third kind `K_ν(x)`, `x > 0`.
///
/// `K_{-ν} = K_ν`. Underflows to 0 / overflows to infinity where the
/// value is not representable; use [`log_bessel_k`] there.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    log_bessel_k(nu, x).map(f64::exp)
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal cdf.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function, accurate in the upper tail.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

#[inline]
pub fn norm_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    norm_ln_pdf(x).exp()
}

/// Standard normal quantile for `p ∈ (0, 1)`; `±∞` at the end points.
#[inline]
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        let mut x = -SQRT_2 * erfc_inv(2.0 * p);
        // One Halley step against the accurate cdf.
        if x.is_finite() {
            let e = if x < 0.0 {
                norm_cdf(x) - p
            } else {
                (1.0 - p) - norm_sf(x)
            };
            let u = e / norm_pdf(x);
            x -= u / (1.0 + 0.5 * x * u);
        }
        x
    }
}

/// Inverse survival function: the `x` with `norm_sf(x) = q`.
#[inline]
pub fn norm_isf(q: f64) -> f64 {
    -norm_ppf(q)
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}
