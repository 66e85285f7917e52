//! Cholesky factorisation with a jitter policy, and the triangular solves
//! built on it.
//!
//! A factorisation first runs on the matrix as given; if it fails, `ε·I` is
//! added with `ε = 1e-10, 1e-9, …, 1e-6` before giving up.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-6;

/// Lower Cholesky factor `L` of a symmetric positive definite matrix
/// (possibly after jitter), with its log-determinant cached.
#[derive(Debug, Clone)]
pub struct Factor {
    l: DMatrix<f64>,
    jitter: f64,
    log_det: f64,
}

fn check_square_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::domain("empty matrix"));
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if !a.is_finite() || !b.is_finite() || (a - b).abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::domain(format!(
                    "matrix is not symmetric/finite at ({i},{j}): {a} vs {b}"
                )));
            }
        }
        if !m[(i, i)].is_finite() {
            return Err(Error::domain(format!("non-finite diagonal entry at {i}")));
        }
    }
    Ok(())
}

fn try_factor(m: &DMatrix<f64>, jitter: f64) -> Option<Factor> {
    let mut a = m.clone();
    if jitter > 0.0 {
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
    }
    let chol = nalgebra::linalg::Cholesky::new(a)?;
    let l = chol.unpack();
    let mut log_det = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        log_det += 2.0 * d.ln();
    }
    Some(Factor { l, jitter, log_det })
}

impl Factor {
    /// Plain factorisation; no jitter.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(m)?;
        try_factor(m, 0.0).ok_or(Error::NotPositiveDefinite { max_jitter: 0.0 })
    }

    /// Factorisation with jitter escalation `1e-10 → 1e-6`.
    pub fn with_jitter(m: &DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(m)?;
        if let Some(f) = try_factor(m, 0.0) {
            return Ok(f);
        }
        let mut eps = JITTER_START;
        while eps <= JITTER_MAX * (1.0 + 1e-9) {
            if let Some(f) = try_factor(m, eps) {
                log::debug!("cholesky succeeded with jitter {eps:e}");
                return Ok(f);
            }
            eps *= 10.0;
        }
        Err(Error::NotPositiveDefinite {
            max_jitter: JITTER_MAX,
        })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Jitter that was added to the diagonal (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `ln |Σ|` of the factorised (jittered) matrix.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `L⁻¹ b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `L⁻ᵀ y` by back substitution.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// `Σ⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `xᵀ Σ⁻¹ x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.solve_lower(x).iter().map(|v| v * v).sum()
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..=i).map(|k| self.l[(i, k)] * z[k]).sum())
            .collect()
    }

    /// `Σ⁻¹` as a dense matrix.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Lower Cholesky factor of `m`, escalating jitter when `m` is numerically
/// singular. Fails with [`Error::NotPositiveDefinite`] past `1e-6·I`.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Factor::with_jitter(m).map(|f| f.l)
}
