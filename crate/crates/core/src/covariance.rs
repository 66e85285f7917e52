//! Correlation families, geometric anisotropy and correlation matrices
//! over a set of sites.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Factor;
use crate::special::{ln_gamma, log_bessel_k};

/// Site labels, planar coordinates and the distance-to-sea covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    ids: Vec<String>,
    coords: Vec<[f64; 2]>,
    covariate: Vec<f64>,
}

impl SiteSet {
    pub fn new(ids: Vec<String>, coords: Vec<[f64; 2]>, covariate: Vec<f64>) -> Result<Self> {
        if coords.len() != ids.len() {
            return Err(Error::Dimension {
                expected: ids.len(),
                got: coords.len(),
            });
        }
        if covariate.len() != ids.len() {
            return Err(Error::Dimension {
                expected: ids.len(),
                got: covariate.len(),
            });
        }
        let mut seen = HashSet::new();
        for (i, id) in ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::domain(format!("duplicate site id {id:?}")));
            }
            if !coords[i].iter().all(|c| c.is_finite()) {
                return Err(Error::domain(format!("non-finite coordinates for site {id:?}")));
            }
            if !(covariate[i] >= 0.0) || !covariate[i].is_finite() {
                return Err(Error::domain(format!(
                    "covariate for site {id:?} must be finite and >= 0, got {}",
                    covariate[i]
                )));
            }
        }
        Ok(Self {
            ids,
            coords,
            covariate,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn covariate(&self) -> &[f64] {
        &self.covariate
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    /// Sites at the given positions, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        for &i in idx {
            if i >= self.len() {
                return Err(Error::domain(format!("site index {i} out of range")));
            }
        }
        Self::new(
            idx.iter().map(|&i| self.ids[i].clone()).collect(),
            idx.iter().map(|&i| self.coords[i]).collect(),
            idx.iter().map(|&i| self.covariate[i]).collect(),
        )
    }

    /// Median of all pairwise Euclidean distances (0 for a single site).
    pub fn median_distance(&self) -> f64 {
        let mut d = Vec::new();
        for i in 0..self.len() {
            for j in 0..i {
                let dx = self.coords[i][0] - self.coords[j][0];
                let dy = self.coords[i][1] - self.coords[j][1];
                d.push(dx.hypot(dy));
            }
        }
        if d.is_empty() {
            return 0.0;
        }
        d.sort_by(f64::total_cmp);
        let m = d.len() / 2;
        if d.len() % 2 == 1 {
            d[m]
        } else {
            0.5 * (d[m - 1] + d[m])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exponential,
    /// Powered exponential with exponent in (0, 2].
    Stable,
    Matern,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(Family::Exponential),
            "stable" | "powexp" => Ok(Family::Stable),
            "matern" => Ok(Family::Matern),
            other => Err(Error::domain(format!("unknown correlation family {other:?}"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Exponential => "exponential",
            Family::Stable => "stable",
            Family::Matern => "matern",
        })
    }
}

/// Parametric correlation function with optional geometric anisotropy.
///
/// `shape` is the stable exponent or the Matérn smoothness ν and is ignored
/// by the exponential family. With `anisotropic` off, `theta` and `b` are
/// ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub family: Family,
    pub scale: f64,
    #[serde(default = "one")]
    pub shape: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default)]
    pub anisotropic: bool,
}

fn one() -> f64 {
    1.0
}

impl CorrelationSpec {
    pub fn isotropic(family: Family, scale: f64, shape: f64) -> Self {
        Self {
            family,
            scale,
            shape,
            theta: 0.0,
            b: 1.0,
            anisotropic: false,
        }
    }

    pub fn with_anisotropy(mut self, theta: f64, b: f64) -> Self {
        self.theta = theta;
        self.b = b;
        self.anisotropic = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::domain(format!("scale must be > 0, got {}", self.scale)));
        }
        match self.family {
            Family::Stable if !(self.shape > 0.0 && self.shape <= 2.0) => {
                return Err(Error::domain(format!(
                    "stable exponent must lie in (0, 2], got {}",
                    self.shape
                )))
            }
            Family::Matern if !(self.shape > 0.0) || !self.shape.is_finite() => {
                return Err(Error::domain(format!(
                    "Matern smoothness must be > 0, got {}",
                    self.shape
                )))
            }
            _ => {}
        }
        if self.anisotropic {
            if !(self.b >= 1.0) || !self.b.is_finite() {
                return Err(Error::domain(format!("stretch b must be >= 1, got {}", self.b)));
            }
            if !self.theta.is_finite() {
                return Err(Error::domain("rotation angle must be finite"));
            }
        }
        Ok(())
    }
}

/// `‖M·Δs‖₂` with `M = diag(b, 1)·R(θ)`, `R(θ)` the counter-clockwise
/// rotation. Plain Euclidean norm when the spec is isotropic.
pub fn aniso_distance(spec: &CorrelationSpec, ds: [f64; 2]) -> f64 {
    if !spec.anisotropic {
        return ds[0].hypot(ds[1]);
    }
    let (s, c) = spec.theta.sin_cos();
    let r0 = c * ds[0] - s * ds[1];
    let r1 = s * ds[0] + c * ds[1];
    (spec.b * r0).hypot(r1)
}

/// Correlation at distance `h ≥ 0`.
pub fn correlation(spec: &CorrelationSpec, h: f64) -> f64 {
    if h <= 0.0 {
        return 1.0;
    }
    let t = h / spec.scale;
    match spec.family {
        Family::Exponential => (-t).exp(),
        Family::Stable => (-t.powf(spec.shape)).exp(),
        Family::Matern => {
            let nu = spec.shape;
            match log_bessel_k(nu, t) {
                Ok(lk) => {
                    let v = ((1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu)
                        + nu * t.ln()
                        + lk)
                        .exp();
                    v.min(1.0)
                }
                // Underflow of K far out in the tail.
                Err(_) => 0.0,
            }
        }
    }
}

/// Correlation matrix `Σ*` of the sites under `spec`.
///
/// The matrix is returned as built; [`Factor::with_jitter`] applies the
/// jitter policy when it is factorised. Use [`build_corr_factor`] for both.
pub fn build_corr_matrix(sites: &SiteSet, spec: &CorrelationSpec) -> Result<DMatrix<f64>> {
    if sites.is_empty() {
        return Err(Error::domain("correlation matrix needs at least one site"));
    }
    spec.validate()?;
    let n = sites.len();
    let c = sites.coords();
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let h = aniso_distance(spec, [c[i][0] - c[j][0], c[i][1] - c[j][1]]);
            if !h.is_finite() {
                return Err(Error::domain(format!(
                    "non-finite distance between sites {i} and {j}"
                )));
            }
            let r = correlation(spec, h);
            m[(i, j)] = r;
            m[(j, i)] = r;
        }
    }
    Ok(m)
}

/// Correlation matrix together with its (possibly jittered) Cholesky factor.
pub fn build_corr_factor(sites: &SiteSet, spec: &CorrelationSpec) -> Result<(DMatrix<f64>, Factor)> {
    let m = build_corr_matrix(sites, spec)?;
    let f = Factor::with_jitter(&m)?;
    Ok((m, f))
}
