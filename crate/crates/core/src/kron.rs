// SPDX-License-Identifier: MIT OR Apache-2.0

//! Kronecker-structured operators, scaled Kronecker sums, conjugate
//! gradients and local cubic interpolation onto latent grids.

use faer::Mat;

use crate::data::{GridSpec, PointSet};
use crate::dense::{self, dot, norm};
use crate::error::{GpcsError, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// `K_1 ⊗ … ⊗ K_D` kept as its factors.
#[derive(Clone, Debug)]
pub struct KronMatrix {
    factors: Vec<Mat<f64>>,
}

impl KronMatrix {
    pub fn new(factors: Vec<Mat<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(GpcsError::Dimension(
                "kronecker product needs a factor".into(),
            ));
        }
        for (d, f) in factors.iter().enumerate() {
            if f.nrows() != f.ncols() {
                return Err(GpcsError::Dimension(format!("factor {d} is not square")));
            }
            let scale = (0..f.ncols())
                .flat_map(|c| (0..f.nrows()).map(move |r| (r, c)))
                .fold(1.0f64, |m, (r, c)| m.max(f[(r, c)].abs()));
            for i in 0..f.nrows() {
                for j in 0..i {
                    if (f[(i, j)] - f[(j, i)]).abs() > SYMMETRY_TOL * scale {
                        return Err(GpcsError::InvalidParameter(format!(
                            "factor {d} is not symmetric"
                        )));
                    }
                }
            }
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Mat<f64>] {
        &self.factors
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    pub fn len(&self) -> usize {
        self.factors.iter().map(|f| f.nrows()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        kron_apply(&self.factors.iter().collect::<Vec<_>>(), v)
    }

    /// Materializes the full matrix. Only for tests and small sizes.
    pub fn dense(&self) -> Mat<f64> {
        let mut out = self.factors[0].clone();
        for f in &self.factors[1..] {
            out = dense::kron(&out, f);
        }
        out
    }

    /// Per-factor eigenvalues, each sorted descending.
    pub fn factor_eigvals(&self) -> Result<Vec<Vec<f64>>> {
        self.factors.iter().map(dense::sym_eigvals).collect()
    }
}

/// Multiplies `v` by `A_1 ⊗ … ⊗ A_D` without forming the product.
///
/// Grid order is row-major, so factor `d` acts on axis `d` with the last
/// axis varying fastest.
pub fn kron_apply(factors: &[&Mat<f64>], v: &[f64]) -> Result<Vec<f64>> {
    let n: usize = factors.iter().map(|f| f.nrows()).product();
    if v.len() != n {
        return Err(GpcsError::Dimension(format!(
            "vector has length {}, operator has size {n}",
            v.len()
        )));
    }
    let mut x = v.to_vec();
    let mut y = vec![0.0; n];
    let mut outer = 1;
    for (d, f) in factors.iter().enumerate() {
        let m = f.nrows();
        let inner: usize = factors[d + 1..].iter().map(|f| f.nrows()).product();
        for o in 0..outer {
            let base = o * m * inner;
            for i in 0..m {
                let yi = &mut y[base + i * inner..base + (i + 1) * inner];
                yi.iter_mut().for_each(|e| *e = 0.0);
                for j in 0..m {
                    let a = f[(i, j)];
                    if a == 0.0 {
                        continue;
                    }
                    let xj = &x[base + j * inner..base + (j + 1) * inner];
                    for (e, &xv) in yi.iter_mut().zip(xj) {
                        *e += a * xv;
                    }
                }
            }
        }
        std::mem::swap(&mut x, &mut y);
        outer *= m;
    }
    Ok(x)
}

pub fn kron_matvec(k: &KronMatrix, v: &[f64]) -> Result<Vec<f64>> {
    k.matvec(v)
}

/// Eigenvalues sorted descending.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenList(Vec<f64>);

impl EigenList {
    /// Sorts the values descending.
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Negative entries (rounding noise on PSD spectra) set to zero.
    pub fn clamped(&self) -> Self {
        if let Some(&min) = self.0.last() {
            if min < -1e-10 * self.0[0].abs().max(1.0) {
                log::warn!("eigenvalue {min:e} clamped to zero");
            }
        }
        Self(self.0.iter().map(|&v| v.max(0.0)).collect())
    }

    /// Truncates or zero-pads to `n` entries, keeping the largest.
    pub fn resized(&self, n: usize) -> Self {
        let mut v: Vec<f64> = self.0.iter().copied().take(n).collect();
        v.resize(n, 0.0);
        Self(v)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.0.iter().map(|v| v * c).collect())
    }
}

/// All products of per-factor eigenvalues, sorted descending.
pub fn kron_eigvals(k: &KronMatrix) -> Result<EigenList> {
    Ok(kron_eigvals_from_factors(&k.factor_eigvals()?))
}

pub fn kron_eigvals_from_factors(factor_eigs: &[Vec<f64>]) -> EigenList {
    let mut out = vec![1.0];
    for e in factor_eigs {
        out = out
            .iter()
            .flat_map(|&a| e.iter().map(move |&b| a * b))
            .collect();
    }
    EigenList::new(out)
}

/// One summand `diag(left) · K · diag(right)`.
#[derive(Clone, Debug)]
pub struct ScaledTerm {
    pub left: Vec<f64>,
    pub kron: KronMatrix,
    pub right: Vec<f64>,
}

/// `Σ_i S_i K_i S_i' + σ²I`.
///
/// With an interpolation operator `W` each term reads `S_i W K_i Wᵀ S_i'`:
/// the scales live on the `n` data points and the Kronecker factors on the
/// latent grid.
#[derive(Clone, Debug)]
pub struct ScaledKronSum {
    terms: Vec<ScaledTerm>,
    noise: f64,
    interp: Option<InterpOperator>,
}

impl ScaledKronSum {
    pub fn new(terms: Vec<ScaledTerm>, noise: f64) -> Result<Self> {
        Self::build(terms, noise, None)
    }

    pub fn with_interp(terms: Vec<ScaledTerm>, noise: f64, interp: InterpOperator) -> Result<Self> {
        Self::build(terms, noise, Some(interp))
    }

    fn build(terms: Vec<ScaledTerm>, noise: f64, interp: Option<InterpOperator>) -> Result<Self> {
        if terms.is_empty() {
            return Err(GpcsError::Dimension(
                "scaled kronecker sum needs a term".into(),
            ));
        }
        if !(noise >= 0.0) {
            return Err(GpcsError::InvalidParameter(format!(
                "noise {noise} is negative"
            )));
        }
        let (n, m) = match &interp {
            Some(w) => (w.nrows(), w.ncols()),
            None => (terms[0].kron.len(), terms[0].kron.len()),
        };
        for (i, t) in terms.iter().enumerate() {
            if t.kron.len() != m || t.left.len() != n || t.right.len() != n {
                return Err(GpcsError::Dimension(format!(
                    "term {i} has inconsistent sizes"
                )));
            }
            if t.left
                .iter()
                .chain(&t.right)
                .any(|s| !(-1e-12..=1.0 + 1e-12).contains(s))
            {
                return Err(GpcsError::InvalidParameter(format!(
                    "term {i} has a scale outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            terms,
            noise,
            interp,
        })
    }

    pub fn terms(&self) -> &[ScaledTerm] {
        &self.terms
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn interp(&self) -> Option<&InterpOperator> {
        self.interp.as_ref()
    }

    /// Number of rows of the represented matrix.
    pub fn len(&self) -> usize {
        self.terms[0].left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if v.len() != n {
            return Err(GpcsError::Dimension(format!(
                "vector has length {}, operator has size {n}",
                v.len()
            )));
        }
        let mut out: Vec<f64> = v.iter().map(|x| self.noise * x).collect();
        for t in &self.terms {
            let sv: Vec<f64> = t.right.iter().zip(v).map(|(s, x)| s * x).collect();
            let kv = match &self.interp {
                Some(w) => w.apply(&t.kron.matvec(&w.apply_t(&sv))?),
                None => t.kron.matvec(&sv)?,
            };
            for ((o, s), k) in out.iter_mut().zip(&t.left).zip(kv) {
                *o += s * k;
            }
        }
        Ok(out)
    }

    /// Materializes the operator. Only for tests and small sizes.
    pub fn dense(&self) -> Mat<f64> {
        let n = self.len();
        let mut out = Mat::<f64>::zeros(n, n);
        for t in &self.terms {
            let k = match &self.interp {
                Some(w) => {
                    let wd = w.dense();
                    &(&wd * &t.kron.dense()) * wd.transpose()
                }
                None => t.kron.dense(),
            };
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += t.left[i] * k[(i, j)] * t.right[j];
                }
            }
        }
        for i in 0..n {
            out[(i, i)] += self.noise;
        }
        out
    }
}

pub fn sum_matvec(k: &ScaledKronSum, v: &[f64]) -> Result<Vec<f64>> {
    k.matvec(v)
}

/// Outcome of [`cg_solve`].
#[derive(Clone, Debug)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖Ax − b‖/‖b‖` of the returned iterate.
    pub residual: f64,
    pub converged: bool,
    /// Best relative residual seen after each iteration (non-increasing).
    pub history: Vec<f64>,
}

/// Unpreconditioned conjugate gradients for a symmetric positive definite
/// operator. Returns the iterate with the smallest residual seen.
pub fn cg_solve<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<CgResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(CgResult {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            converged: true,
            history: Vec::new(),
        });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut best_x = x.clone();
    let mut best = 1.0;
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter && best > tol {
        let ap = apply(&p)?;
        if ap.len() != n {
            return Err(GpcsError::Dimension(
                "operator changed the vector length".into(),
            ));
        }
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            log::warn!("cg: operator not positive definite along search direction");
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / bnorm;
        if rel < best {
            best = rel;
            best_x.copy_from_slice(&x);
        }
        history.push(best);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let converged = best <= tol;
    if !converged {
        log::warn!("cg stopped after {iterations} iterations at residual {best:e}");
    }
    Ok(CgResult {
        x: best_x,
        iterations,
        residual: best,
        converged,
        history,
    })
}

/// Sparse `n × m` interpolation matrix from data points onto a latent grid.
#[derive(Clone, Debug)]
pub struct InterpOperator {
    rows: Vec<Vec<(usize, f64)>>,
    ncols: usize,
    /// True when some axis had fewer than four nodes and used linear weights.
    pub linear_fallback: bool,
}

impl InterpOperator {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `W v` (grid values to data points).
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * v[j]).sum())
            .collect()
    }

    /// `Wᵀ v` (data points to grid).
    pub fn apply_t(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (row, &x) in self.rows.iter().zip(v) {
            for &(j, w) in row {
                out[j] += w * x;
            }
        }
        out
    }

    pub fn dense(&self) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.nrows(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out[(i, j)] += w;
            }
        }
        out
    }
}

/// Tensor-product local cubic weights of each point onto `grid`.
///
/// Each axis uses the four nodes surrounding the point (shifted inward at
/// the boundary) with Lagrange weights, so cubics are reproduced exactly
/// and nodes map to one-hot rows. Points outside the grid are clamped.
pub fn interp_weights(grid: &GridSpec, x: &PointSet) -> Result<InterpOperator> {
    if x.dim() != grid.dim() {
        return Err(GpcsError::Dimension(format!(
            "points have {} dimensions, grid has {}",
            x.dim(),
            grid.dim()
        )));
    }
    let sizes = grid.sizes();
    let linear_fallback = sizes.iter().any(|&m| m > 1 && m < 4);
    if linear_fallback {
        log::warn!("grid axis with fewer than 4 nodes; using linear interpolation there");
    }
    let mut clamped = 0usize;
    let mut rows = Vec::with_capacity(x.len());
    for p in x.rows() {
        let mut row: Vec<(usize, f64)> = vec![(0, 1.0)];
        for (&v, axis) in p.iter().zip(grid.axes()) {
            let (lo, hi) = (axis[0], axis[axis.len() - 1]);
            let v = if v < lo || v > hi {
                clamped += 1;
                v.clamp(lo, hi)
            } else {
                v
            };
            let local = axis_weights(axis, v);
            row = row
                .iter()
                .flat_map(|&(j, w)| local.iter().map(move |&(k, u)| (j * axis.len() + k, w * u)))
                .collect();
        }
        row.retain(|&(_, w)| w != 0.0);
        rows.push(row);
    }
    if clamped > 0 {
        log::warn!("{clamped} coordinates outside the interpolation grid were clamped");
    }
    Ok(InterpOperator {
        rows,
        ncols: grid.len(),
        linear_fallback,
    })
}

fn axis_weights(axis: &[f64], v: f64) -> Vec<(usize, f64)> {
    let m = axis.len();
    if m == 1 {
        return vec![(0, 1.0)];
    }
    let cell = axis.partition_point(|&a| a <= v).clamp(1, m - 1) - 1;
    if m < 4 {
        let t = (v - axis[cell]) / (axis[cell + 1] - axis[cell]);
        return vec![(cell, 1.0 - t), (cell + 1, t)];
    }
    let start = cell.saturating_sub(1).min(m - 4);
    let nodes = &axis[start..start + 4];
    (0..4)
        .map(|k| {
            let w = (0..4)
                .filter(|&j| j != k)
                .map(|j| (v - nodes[j]) / (nodes[k] - nodes[j]))
                .product::<f64>();
            (start + k, w)
        })
        .collect()
}
