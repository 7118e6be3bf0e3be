// SPDX-License-Identifier: MIT OR Apache-2.0

//! Thin wrappers over faer's dense symmetric factorizations.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};

use crate::error::{GpcsError, Result};

/// Jitter relative to the mean diagonal added before every Cholesky.
pub const JITTER_REL: f64 = 1e-8;

/// Number of factorization attempts; the jitter grows tenfold each time.
pub const JITTER_ATTEMPTS: usize = 3;

/// Cholesky factor of `A + jitter·I`.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    jitter: f64,
    logdet: f64,
}

impl Cholesky {
    /// Factorizes `a + jitter·I`, multiplying the jitter by 10 on failure.
    ///
    /// `jitter` is absolute; a zero value first tries the bare matrix and
    /// then escalates from `JITTER_REL` times the mean diagonal.
    pub fn new(a: &Mat<f64>, jitter: f64) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(GpcsError::Dimension(format!(
                "cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let scale = (0..n).map(|i| a[(i, i)].abs()).sum::<f64>() / n.max(1) as f64;
        let mut j = jitter;
        let mut last = jitter;
        for attempt in 0..JITTER_ATTEMPTS {
            if attempt > 0 {
                j = if j > 0.0 {
                    j * 10.0
                } else {
                    JITTER_REL * scale.max(f64::MIN_POSITIVE)
                };
            }
            last = j;
            let mut m = a.clone();
            for i in 0..n {
                m[(i, i)] += j;
            }
            if (0..n).any(|c| (0..n).any(|r| !m[(r, c)].is_finite())) {
                break;
            }
            if let Ok(llt) = m.llt(Side::Lower) {
                let l = llt.L();
                let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
                if logdet.is_finite() {
                    if attempt > 0 {
                        log::debug!("cholesky needed jitter {j:e}");
                    }
                    return Ok(Self {
                        llt,
                        jitter: j,
                        logdet,
                    });
                }
            }
        }
        Err(GpcsError::Factorization { jitter: last })
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    /// The jitter that was finally added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        (0..b.len()).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        let mut rhs = b.clone();
        self.llt.solve_in_place(rhs.as_mut());
        rhs
    }

    pub fn inverse(&self) -> Mat<f64> {
        self.llt.inverse()
    }

    /// The lower factor `L`.
    pub fn lower(&self) -> Mat<f64> {
        self.llt.L().to_owned()
    }

    /// `L⁻¹ B` for the lower factor `L`.
    pub fn lower_solve(&self, b: &Mat<f64>) -> Mat<f64> {
        let mut rhs = b.clone();
        self.llt.L().solve_lower_triangular_in_place(rhs.as_mut());
        rhs
    }

    /// `L z` for the lower factor `L`.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        let l = self.llt.L();
        (0..z.len())
            .map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum())
            .collect()
    }
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn sym_eigvals(a: &Mat<f64>) -> Result<Vec<f64>> {
    let mut v = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| GpcsError::Eigen)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(GpcsError::Eigen);
    }
    v.reverse();
    Ok(v)
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending with matching
/// eigenvector columns.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| GpcsError::Eigen)?;
    let n = a.nrows();
    let s = e.S().column_vector();
    let u = e.U();
    let vals: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    if vals.iter().any(|x| !x.is_finite()) {
        return Err(GpcsError::Eigen);
    }
    let vecs = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((vals, vecs))
}

pub fn matvec(a: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Kronecker product of two dense matrices.
pub fn kron(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let (p, q) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * p, a.ncols() * q, |i, j| {
        a[(i / p, j / q)] * b[(i % p, j % q)]
    })
}

/// Row-major `Vec<Vec<f64>>` view, handy for serialization.
pub fn to_rows(a: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}
