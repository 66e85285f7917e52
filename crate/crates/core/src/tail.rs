//! Tail dependence: residual and sum coefficients, extrapolation factors
//! for exceedance sets, empirical `λ(u)` and Hill estimates of `ρ`, model
//! `λ_u` curves and the sum transform behind QQ diagnostics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::SiteSet;
use crate::dist::StdLaplace;
use crate::error::{Error, Result};
use crate::field::{mv_laplace_cdf, DepType, MixtureOptions};
use crate::inference::rank_pit;
use crate::linalg::Factor;
use crate::mvn::{mvn_cdf, MvnOptions};
use crate::special::{norm_cdf, norm_ppf, norm_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExceedanceKind {
    /// `x_c ≥ u` for one component `c`.
    Marginal,
    /// `Σ_j x_j ≥ u`.
    Sum,
    /// `max_j x_j ≥ u`.
    Max,
    /// `min_j x_j ≥ u`.
    Min,
}

impl std::str::FromStr for ExceedanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "marginal" => Ok(Self::Marginal),
            "sum" => Ok(Self::Sum),
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            other => Err(Error::domain(format!("unknown exceedance kind {other:?}"))),
        }
    }
}

/// Exceedance set on the standard-margin scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSpec {
    pub kind: ExceedanceKind,
    pub u: f64,
    /// Component for the marginal kind.
    #[serde(default)]
    pub component: usize,
}

impl ExceedanceSpec {
    pub fn new(kind: ExceedanceKind, u: f64) -> Self {
        Self {
            kind,
            u,
            component: 0,
        }
    }

    pub fn marginal(component: usize, u: f64) -> Self {
        Self {
            kind: ExceedanceKind::Marginal,
            u,
            component,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.u > 0.0) || !self.u.is_finite() {
            return Err(Error::domain(format!("exceedance threshold must be > 0, got {}", self.u)));
        }
        if self.kind == ExceedanceKind::Marginal && self.component >= d {
            return Err(Error::domain(format!(
                "component {} out of range for dimension {d}",
                self.component
            )));
        }
        Ok(())
    }

    /// Whether `x` lies in the exceedance set.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self.kind {
            ExceedanceKind::Marginal => x[self.component] >= self.u,
            ExceedanceKind::Sum => x.iter().sum::<f64>() >= self.u,
            ExceedanceKind::Max => x.iter().any(|&v| v >= self.u),
            ExceedanceKind::Min => x.iter().all(|&v| v >= self.u),
        }
    }
}

/// Bivariate residual coefficient `√((1+ρ_lin)/2)`.
pub fn residual_coef_biv(rho_lin: f64) -> Result<f64> {
    if !(rho_lin > -1.0 && rho_lin <= 1.0) {
        return Err(Error::domain(format!(
            "linear correlation must lie in (-1, 1], got {rho_lin}"
        )));
    }
    Ok((0.5 * (1.0 + rho_lin)).sqrt())
}

/// Multivariate residual coefficient `1/√(e'(Σ*)⁻¹e)`.
pub fn residual_coef_mv(corr: &DMatrix<f64>) -> Result<f64> {
    let f = Factor::new(corr).map_err(|_| Error::Singular("correlation matrix".into()))?;
    let e = vec![1.0; f.dim()];
    Ok(1.0 / f.quad_form(&e).sqrt())
}

/// `√(Σ_{j,k} σ*_{jk})`, the scale of the component sum.
pub fn sum_dependence_coef(corr: &DMatrix<f64>) -> f64 {
    corr.iter().sum::<f64>().max(0.0).sqrt()
}

/// Multiplicative factor relating `pr(X − t ∈ A)` to `pr(X ∈ A)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrapolation {
    pub factor: f64,
    /// `true` for an identity, `false` for an asymptotic rate.
    pub exact: bool,
}

/// Extrapolation factor for shifting all components by `t ≥ 0`.
pub fn extrapolation_factor(
    sigma: &DMatrix<f64>,
    spec: &ExceedanceSpec,
    t: f64,
) -> Result<Extrapolation> {
    let d = sigma.nrows();
    if !(t >= 0.0) {
        return Err(Error::domain(format!("shift must be >= 0, got {t}")));
    }
    if spec.kind == ExceedanceKind::Marginal && spec.component >= d {
        return Err(Error::domain("component out of range"));
    }
    Ok(match spec.kind {
        ExceedanceKind::Sum => Extrapolation {
            factor: (-(d as f64) * t / sum_dependence_coef(sigma)).exp(),
            exact: true,
        },
        ExceedanceKind::Marginal => Extrapolation {
            factor: (-t / sigma[(spec.component, spec.component)].sqrt()).exp(),
            exact: true,
        },
        ExceedanceKind::Max => {
            let s = (0..d).map(|i| sigma[(i, i)]).fold(0.0, f64::max).sqrt();
            Extrapolation {
                factor: (-t / s).exp(),
                exact: d == 1,
            }
        }
        ExceedanceKind::Min => {
            if (0..d).any(|i| (sigma[(i, i)] - 1.0).abs() > 1e-12) {
                return Err(Error::domain(
                    "min-exceedance rate requires a correlation matrix",
                ));
            }
            Extrapolation {
                factor: (-t / residual_coef_mv(sigma)?).exp(),
                exact: d == 1,
            }
        }
    })
}

/// `pr(Σ_j X_j ≥ u) = 0.5·exp(−u/√(e'Σe))` for `u ≥ 0`.
pub fn sum_exceedance_prob(sigma: &DMatrix<f64>, u: f64) -> f64 {
    StdLaplace::survival(u / sum_dependence_coef(sigma))
}

/// `pr(X_c ≥ u)`.
pub fn marginal_exceedance_prob(sigma: &DMatrix<f64>, component: usize, u: f64) -> f64 {
    StdLaplace::survival(u / sigma[(component, component)].sqrt())
}

/// Limit `(xy)^{1/(2ρ)}` of the bivariate conditional joint survival.
pub fn joint_tail_limit_biv(rho_lin: f64, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0 && y > 0.0 && y <= 1.0) {
        return Err(Error::domain("x and y must lie in (0, 1]"));
    }
    let rho = residual_coef_biv(rho_lin)?;
    Ok((x * y).powf(0.5 / rho))
}

/// Empirical tail correlation `λ̂(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub u: f64,
    pub value: f64,
    /// Joint exceedances.
    pub joint: usize,
    /// Smaller of the two marginal exceedance counts.
    pub marginal: usize,
    /// Fewer than 5 marginal exceedances.
    pub flagged: bool,
}

/// Rank-based `λ̂(u)`, averaged over both conditioning directions.
pub fn empirical_lambda(a: &[f64], b: &[f64], u: f64) -> Result<LambdaEstimate> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("u must lie in (0, 1), got {u}")));
    }
    if a.len() < 2 {
        return Err(Error::domain("need at least two pairs"));
    }
    let (ra, rb) = (rank_pit(a), rank_pit(b));
    let mut na = 0usize;
    let mut nb = 0usize;
    let mut joint = 0usize;
    for (x, y) in ra.iter().zip(&rb) {
        let (ea, eb) = (*x > u, *y > u);
        na += ea as usize;
        nb += eb as usize;
        joint += (ea && eb) as usize;
    }
    let marginal = na.min(nb);
    let value = if na == 0 || nb == 0 {
        f64::NAN
    } else {
        0.5 * (joint as f64 / na as f64 + joint as f64 / nb as f64)
    };
    Ok(LambdaEstimate {
        u,
        value,
        joint,
        marginal,
        flagged: marginal < 5,
    })
}

/// Hill estimate of the residual coefficient from the `k` largest values
/// of `min(X*₁, X*₂)`, `X* = 1/(2(1 − rank/(n+1)))`.
///
/// Fails when ties leave fewer than `k/2` distinct values among them.
pub fn hill_rho(a: &[f64], b: &[f64], k: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if k < 10 {
        return Err(Error::domain(format!("Hill estimator needs k >= 10, got {k}")));
    }
    let n = a.len();
    if n <= k {
        return Err(Error::domain(format!("need more than k = {k} pairs, got {n}")));
    }
    let (ra, rb) = (rank_pit(a), rank_pit(b));
    let mut t: Vec<f64> = ra
        .iter()
        .zip(&rb)
        .map(|(x, y)| (0.5 / (1.0 - x)).min(0.5 / (1.0 - y)))
        .collect();
    t.sort_by(f64::total_cmp);
    let top = &t[n - k - 1..];
    let distinct = 1 + top.windows(2).filter(|w| w[1] > w[0]).count();
    // min of two rank scales ties often; only a collapsed tail is rejected
    if 2 * distinct < k {
        return Err(Error::domain(format!(
            "ties leave only {distinct} distinct values among the top {} order statistics",
            k + 1
        )));
    }
    let base = top[0].ln();
    Ok(top[1..].iter().map(|v| v.ln() - base).sum::<f64>() / k as f64)
}

/// Model conditional exceedance probability
/// `λ_u = pr(X₂ > q_u | X₁ > q_u)` for a 2×2 correlation matrix.
///
/// Evaluated as `pr(X ≤ (−q_u, −q_u))/(1−u)`, which by symmetry equals
/// `[1 − 2u + pr(X ≤ (q_u, q_u))]/(1−u)` without the cancellation.
pub fn model_lambda_u(corr: &DMatrix<f64>, u: f64, dep_type: DepType) -> Result<f64> {
    if corr.nrows() != 2 || corr.ncols() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: corr.nrows(),
        });
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("u must lie in (0, 1), got {u}")));
    }
    if (corr[(0, 1)] - 1.0).abs() < 1e-12 {
        return Ok(1.0);
    }
    let joint = match dep_type {
        DepType::Laplace => {
            let q = StdLaplace::quantile(u)?;
            mv_laplace_cdf(corr, &[-q, -q], &MixtureOptions::default())?.prob
        }
        DepType::Gaussian => {
            let q = norm_ppf(u);
            let opts = MvnOptions {
                abs_tol: 0.0,
                rel_tol: 1e-4,
                ..MvnOptions::default()
            };
            mvn_cdf(corr, &[-q, -q], &opts)?.prob
        }
    };
    Ok((joint / (1.0 - u)).min(1.0))
}

/// Per-observation standard-Laplace quantile of the standardised sum.
///
/// Laplace type: `Σ_j F⁻¹(x̃_j)/√(e'Σe)`; Gaussian type:
/// `F⁻¹(Φ(Σ_j Φ⁻¹(x̃_j)/√(e'Σe)))`, `F` the standard Laplace cdf.
pub fn qq_sum_transform(data: &[Vec<f64>], sigma: &DMatrix<f64>, dep_type: DepType) -> Result<Vec<f64>> {
    let d = sigma.nrows();
    let scale = sum_dependence_coef(sigma);
    data.iter()
        .map(|row| {
            if row.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: row.len(),
                });
            }
            match dep_type {
                DepType::Laplace => {
                    let mut s = 0.0;
                    for &p in row {
                        s += StdLaplace::quantile(p)?;
                    }
                    Ok(s / scale)
                }
                DepType::Gaussian => {
                    let mut s = 0.0;
                    for &p in row {
                        if !(p > 0.0 && p < 1.0) {
                            return Err(Error::domain(format!("uniform value {p} outside (0,1)")));
                        }
                        s += norm_ppf(p);
                    }
                    let z = s / scale;
                    if z >= 0.0 {
                        StdLaplace::inverse_survival(norm_sf(z).max(f64::MIN_POSITIVE))
                    } else {
                        StdLaplace::quantile(norm_cdf(z).max(f64::MIN_POSITIVE))
                    }
                }
            }
        })
        .collect()
}

/// `(theoretical, empirical)` QQ pairs above plotting position `threshold`.
pub fn qq_points(values: &[f64], threshold: f64) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .filter_map(|(i, &x)| {
            let p = (i + 1) as f64 / (n + 1.0);
            (p > threshold).then(|| (StdLaplace::quantile(p).unwrap_or(f64::NAN), x))
        })
        .collect()
}

/// Diagnostics for one pair of sites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDiagnostic {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub lambdas: Vec<LambdaEstimate>,
    /// Hill estimate of `ρ`; `None` when it cannot be computed.
    pub rho: Option<f64>,
}

/// `λ̂(u)` for each threshold and the Hill `ρ̂` for every pair of columns.
pub fn pair_diagnostics(
    columns: &[Vec<f64>],
    sites: &SiteSet,
    thresholds: &[f64],
    k: usize,
) -> Result<Vec<PairDiagnostic>> {
    if columns.len() != sites.len() {
        return Err(Error::Dimension {
            expected: sites.len(),
            got: columns.len(),
        });
    }
    let pairs: Vec<(usize, usize)> = (0..columns.len())
        .flat_map(|i| (i + 1..columns.len()).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&columns[i], &columns[j]);
            let lambdas = thresholds
                .iter()
                .map(|&u| empirical_lambda(a, b, u))
                .collect::<Result<Vec<_>>>()?;
            let c = sites.coords();
            Ok(PairDiagnostic {
                i,
                j,
                distance: (c[i][0] - c[j][0]).hypot(c[i][1] - c[j][1]),
                lambdas,
                rho: hill_rho(a, b, k).ok(),
            })
        })
        .collect()
}
