// SPDX-License-Identifier: MIT OR Apache-2.0

//! Stationary kernels: RBF and spectral mixture (joint and per-dimension
//! product forms), with log-parameterized hyperparameters.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::{GridSpec, PointSet};
use crate::error::{GpcsError, Result};
use crate::kron::KronMatrix;

/// Squared exponential kernel `s² exp(−½ Σ_d τ_d² / V_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfParams {
    pub signal_variance: f64,
    /// Diagonal of `V` (squared length-scales), one per input dimension.
    pub bandwidths: Vec<f64>,
}

impl RbfParams {
    pub fn new(signal_variance: f64, bandwidths: Vec<f64>) -> Self {
        Self {
            signal_variance,
            bandwidths,
        }
    }

    /// From length-scales rather than bandwidths.
    pub fn from_lengthscales(signal_variance: f64, lengthscales: &[f64]) -> Self {
        Self::new(
            signal_variance,
            lengthscales.iter().map(|l| l * l).collect(),
        )
    }
}

/// Joint spectral mixture kernel over all dimensions.
///
/// `k(τ) = Σ_q w_q cos(2π τ·μ_q) Π_d exp(−2π² τ_d² v_qd)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmParams {
    pub weights: Vec<f64>,
    /// `means[q][d]`.
    pub means: Vec<Vec<f64>>,
    /// `variances[q][d]`.
    pub variances: Vec<Vec<f64>>,
}

/// One-dimensional spectral mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sm1d {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl Sm1d {
    pub fn q(&self) -> usize {
        self.weights.len()
    }

    pub fn eval(&self, tau: f64) -> f64 {
        (0..self.q())
            .map(|q| {
                self.weights[q]
                    * (2.0 * PI * tau * self.means[q]).cos()
                    * (-2.0 * PI * PI * tau * tau * self.variances[q]).exp()
            })
            .sum()
    }

    /// Derivatives with respect to `[ln w.., μ.., ln v..]`.
    fn grad(&self, tau: f64, out: &mut [f64]) {
        let q_n = self.q();
        for q in 0..q_n {
            let arg = 2.0 * PI * tau * self.means[q];
            let env = (-2.0 * PI * PI * tau * tau * self.variances[q]).exp();
            let wc = self.weights[q] * arg.cos() * env;
            out[q] = wc;
            out[q_n + q] = -self.weights[q] * arg.sin() * env * 2.0 * PI * tau;
            out[2 * q_n + q] = wc * (-2.0 * PI * PI * tau * tau * self.variances[q]);
        }
    }
}

/// Product over dimensions of independent 1-D spectral mixtures; this form
/// factorizes over grid axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmProductParams {
    pub dims: Vec<Sm1d>,
}

/// Covariance function of one regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Rbf(RbfParams),
    Sm(SmParams),
    SmProduct(SmProductParams),
}

/// Flat hyperparameters with a name for every slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

fn ln_pos(v: f64) -> f64 {
    v.max(1e-300).ln()
}

impl Kernel {
    pub fn rbf(signal_variance: f64, bandwidths: Vec<f64>) -> Self {
        Kernel::Rbf(RbfParams::new(signal_variance, bandwidths))
    }

    pub fn dim(&self) -> usize {
        match self {
            Kernel::Rbf(p) => p.bandwidths.len(),
            Kernel::Sm(p) => p.means.first().map_or(0, Vec::len),
            Kernel::SmProduct(p) => p.dims.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(GpcsError::InvalidParameter(msg.to_string()));
        let pos = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x.is_finite());
        match self {
            Kernel::Rbf(p) => {
                if p.bandwidths.is_empty() {
                    return bad("rbf kernel needs at least one bandwidth");
                }
                if !(p.signal_variance > 0.0 && p.signal_variance.is_finite())
                    || !pos(&p.bandwidths)
                {
                    return bad("rbf parameters must be positive and finite");
                }
            }
            Kernel::Sm(p) => {
                let q = p.weights.len();
                if q == 0 || p.means.len() != q || p.variances.len() != q {
                    return bad("spectral mixture needs matching weights, means and variances");
                }
                let d = p.means[0].len();
                if d == 0
                    || p.means
                        .iter()
                        .any(|m| m.len() != d || m.iter().any(|v| !v.is_finite()))
                    || p.variances.iter().any(|v| v.len() != d || !pos(v))
                {
                    return bad("spectral mixture means must be finite and variances positive");
                }
                if p.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
                    || p.weights.iter().sum::<f64>() <= 0.0
                {
                    return bad(
                        "spectral mixture weights must be non-negative with a positive sum",
                    );
                }
            }
            Kernel::SmProduct(p) => {
                if p.dims.is_empty() {
                    return bad("product spectral mixture needs at least one dimension");
                }
                for s in &p.dims {
                    let q = s.q();
                    if q == 0 || s.means.len() != q || s.variances.len() != q {
                        return bad("spectral mixture needs matching weights, means and variances");
                    }
                    if !pos(&s.variances) || s.means.iter().any(|m| !m.is_finite()) {
                        return bad("spectral mixture means must be finite and variances positive");
                    }
                    if s.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
                        || s.weights.iter().sum::<f64>() <= 0.0
                    {
                        return bad(
                            "spectral mixture weights must be non-negative with a positive sum",
                        );
                    }
                }
            }
        }
        Ok(())
    }

    /// `k(x, x)`.
    pub fn variance(&self) -> f64 {
        match self {
            Kernel::Rbf(p) => p.signal_variance,
            Kernel::Sm(p) => p.weights.iter().sum(),
            Kernel::SmProduct(p) => p
                .dims
                .iter()
                .map(|s| s.weights.iter().sum::<f64>())
                .product(),
        }
    }

    /// True when the kernel factorizes over input dimensions.
    pub fn is_multiplicative(&self) -> bool {
        match self {
            Kernel::Sm(_) => self.dim() == 1,
            _ => true,
        }
    }

    pub fn eval_pair(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Rbf(p) => {
                let r: f64 = a
                    .iter()
                    .zip(b)
                    .zip(&p.bandwidths)
                    .map(|((x, y), v)| (x - y) * (x - y) / v)
                    .sum();
                p.signal_variance * (-0.5 * r).exp()
            }
            Kernel::Sm(p) => (0..p.weights.len())
                .map(|q| {
                    let mut phase = 0.0;
                    let mut env = 0.0;
                    for d in 0..a.len() {
                        let t = a[d] - b[d];
                        phase += t * p.means[q][d];
                        env += t * t * p.variances[q][d];
                    }
                    p.weights[q] * (2.0 * PI * phase).cos() * (-2.0 * PI * PI * env).exp()
                })
                .sum(),
            Kernel::SmProduct(p) => p
                .dims
                .iter()
                .enumerate()
                .map(|(d, s)| s.eval(a[d] - b[d]))
                .product(),
        }
    }

    /// Kernel matrix between two point sets.
    pub fn eval(&self, x: &PointSet, y: &PointSet) -> Result<Mat<f64>> {
        self.check_dim(x.dim())?;
        self.check_dim(y.dim())?;
        Ok(Mat::from_fn(x.len(), y.len(), |i, j| {
            self.eval_pair(x.row(i), y.row(j))
        }))
    }

    /// Symmetric kernel matrix of one point set.
    pub fn gram(&self, x: &PointSet) -> Result<Mat<f64>> {
        self.check_dim(x.dim())?;
        let n = x.len();
        let mut k = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval_pair(x.row(i), x.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(GpcsError::Dimension(format!(
                "kernel is {}-dimensional, points are {d}-dimensional",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        match self {
            Kernel::Rbf(p) => 1 + p.bandwidths.len(),
            Kernel::Sm(p) => p.weights.len() * (1 + 2 * self.dim()),
            Kernel::SmProduct(p) => p.dims.iter().map(|s| 3 * s.q()).sum(),
        }
    }

    /// Unconstrained parameters: logs of positive quantities, raw means.
    pub fn pack(&self) -> Vec<f64> {
        match self {
            Kernel::Rbf(p) => std::iter::once(ln_pos(p.signal_variance))
                .chain(p.bandwidths.iter().map(|&v| ln_pos(v)))
                .collect(),
            Kernel::Sm(p) => p
                .weights
                .iter()
                .map(|&w| ln_pos(w))
                .chain(p.means.iter().flatten().copied())
                .chain(p.variances.iter().flatten().map(|&v| ln_pos(v)))
                .collect(),
            Kernel::SmProduct(p) => p
                .dims
                .iter()
                .flat_map(|s| {
                    s.weights
                        .iter()
                        .map(|&w| ln_pos(w))
                        .chain(s.means.iter().copied())
                        .chain(s.variances.iter().map(|&v| ln_pos(v)))
                        .collect::<Vec<_>>()
                })
                .collect(),
        }
    }

    /// A kernel of the same shape carrying the packed values `theta`.
    pub fn unpack(&self, theta: &[f64]) -> Result<Kernel> {
        if theta.len() != self.n_params() {
            return Err(GpcsError::Dimension(format!(
                "{} values for {} kernel parameters",
                theta.len(),
                self.n_params()
            )));
        }
        let k = match self {
            Kernel::Rbf(_) => Kernel::Rbf(RbfParams {
                signal_variance: theta[0].exp(),
                bandwidths: theta[1..].iter().map(|v| v.exp()).collect(),
            }),
            Kernel::Sm(p) => {
                let q = p.weights.len();
                let d = self.dim();
                let (w, rest) = theta.split_at(q);
                let (m, v) = rest.split_at(q * d);
                Kernel::Sm(SmParams {
                    weights: w.iter().map(|x| x.exp()).collect(),
                    means: m.chunks(d).map(<[f64]>::to_vec).collect(),
                    variances: v
                        .chunks(d)
                        .map(|c| c.iter().map(|x| x.exp()).collect())
                        .collect(),
                })
            }
            Kernel::SmProduct(p) => {
                let mut off = 0;
                let dims = p
                    .dims
                    .iter()
                    .map(|s| {
                        let q = s.q();
                        let t = &theta[off..off + 3 * q];
                        off += 3 * q;
                        Sm1d {
                            weights: t[..q].iter().map(|x| x.exp()).collect(),
                            means: t[q..2 * q].to_vec(),
                            variances: t[2 * q..].iter().map(|x| x.exp()).collect(),
                        }
                    })
                    .collect();
                Kernel::SmProduct(SmProductParams { dims })
            }
        };
        Ok(k)
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        match self {
            Kernel::Rbf(p) => std::iter::once(format!("{prefix}.ln_signal_variance"))
                .chain((0..p.bandwidths.len()).map(|d| format!("{prefix}.ln_bandwidth[{d}]")))
                .collect(),
            Kernel::Sm(p) => {
                let q = p.weights.len();
                let d = self.dim();
                let mut names: Vec<String> =
                    (0..q).map(|i| format!("{prefix}.ln_weight[{i}]")).collect();
                for i in 0..q {
                    names.extend((0..d).map(|j| format!("{prefix}.mean[{i}][{j}]")));
                }
                for i in 0..q {
                    names.extend((0..d).map(|j| format!("{prefix}.ln_variance[{i}][{j}]")));
                }
                names
            }
            Kernel::SmProduct(p) => {
                let mut names = Vec::new();
                for (d, s) in p.dims.iter().enumerate() {
                    let q = s.q();
                    names.extend((0..q).map(|i| format!("{prefix}.dim[{d}].ln_weight[{i}]")));
                    names.extend((0..q).map(|i| format!("{prefix}.dim[{d}].mean[{i}]")));
                    names.extend((0..q).map(|i| format!("{prefix}.dim[{d}].ln_variance[{i}]")));
                }
                names
            }
        }
    }

    pub fn hyper_vector(&self, prefix: &str) -> HyperVector {
        HyperVector {
            names: self.param_names(prefix),
            values: self.pack(),
        }
    }

    /// Writes `∂k(a, b)/∂θ_p` for every packed parameter into `out`.
    pub fn pair_grad(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        match self {
            Kernel::Rbf(p) => {
                let mut r = 0.0;
                for d in 0..a.len() {
                    let t = a[d] - b[d];
                    let q = t * t / p.bandwidths[d];
                    out[1 + d] = 0.5 * q;
                    r += q;
                }
                let k = p.signal_variance * (-0.5 * r).exp();
                out[0] = k;
                for o in &mut out[1..] {
                    *o *= k;
                }
            }
            Kernel::Sm(p) => {
                let q_n = p.weights.len();
                let dn = a.len();
                for q in 0..q_n {
                    let mut phase = 0.0;
                    let mut env = 0.0;
                    for d in 0..dn {
                        let t = a[d] - b[d];
                        phase += t * p.means[q][d];
                        env += t * t * p.variances[q][d];
                    }
                    let e = (-2.0 * PI * PI * env).exp();
                    let arg = 2.0 * PI * phase;
                    let wc = p.weights[q] * arg.cos() * e;
                    let ws = p.weights[q] * arg.sin() * e;
                    out[q] = wc;
                    for d in 0..dn {
                        let t = a[d] - b[d];
                        out[q_n + q * dn + d] = -ws * 2.0 * PI * t;
                        out[q_n + q_n * dn + q * dn + d] =
                            wc * (-2.0 * PI * PI * t * t * p.variances[q][d]);
                    }
                }
            }
            Kernel::SmProduct(p) => {
                let g: Vec<f64> = p
                    .dims
                    .iter()
                    .enumerate()
                    .map(|(d, s)| s.eval(a[d] - b[d]))
                    .collect();
                let mut off = 0;
                for (d, s) in p.dims.iter().enumerate() {
                    let others: f64 = g
                        .iter()
                        .enumerate()
                        .filter(|&(e, _)| e != d)
                        .map(|(_, v)| v)
                        .product();
                    let n = 3 * s.q();
                    s.grad(a[d] - b[d], &mut out[off..off + n]);
                    for o in &mut out[off..off + n] {
                        *o *= others;
                    }
                    off += n;
                }
            }
        }
    }

    /// Kernel factor for axis `d` evaluated on `coords`.
    pub fn factor(&self, d: usize, coords: &[f64]) -> Result<Mat<f64>> {
        if !self.is_multiplicative() {
            return Err(GpcsError::NotMultiplicative);
        }
        if d >= self.dim() {
            return Err(GpcsError::Dimension(format!(
                "no axis {d} in a {}-d kernel",
                self.dim()
            )));
        }
        let m = coords.len();
        let f = |tau: f64| -> f64 {
            match self {
                Kernel::Rbf(p) => {
                    let s = if d == 0 { p.signal_variance } else { 1.0 };
                    s * (-0.5 * tau * tau / p.bandwidths[d]).exp()
                }
                Kernel::Sm(_) => self.eval_pair(&[tau], &[0.0]),
                Kernel::SmProduct(p) => p.dims[d].eval(tau),
            }
        };
        Ok(Mat::from_fn(m, m, |i, j| f(coords[i] - coords[j])))
    }

    /// Range of packed parameters that affect factor `d`.
    pub fn factor_params(&self, d: usize) -> std::ops::Range<usize> {
        match self {
            Kernel::Rbf(_) => {
                if d == 0 {
                    0..2
                } else {
                    1 + d..2 + d
                }
            }
            Kernel::Sm(_) => 0..self.n_params(),
            Kernel::SmProduct(p) => {
                let off: usize = p.dims[..d].iter().map(|s| 3 * s.q()).sum();
                off..off + 3 * p.dims[d].q()
            }
        }
    }

    /// `∂(factor d)/∂θ_p`; zero unless `p` lies in [`Self::factor_params`].
    pub fn factor_grad(&self, d: usize, coords: &[f64], p: usize) -> Result<Mat<f64>> {
        let base = self.factor(d, coords)?;
        let m = coords.len();
        let mut out = Mat::<f64>::zeros(m, m);
        if !self.factor_params(d).contains(&p) {
            return Ok(out);
        }
        match self {
            Kernel::Rbf(r) => {
                if d == 0 && p == 0 {
                    return Ok(base);
                }
                for i in 0..m {
                    for j in 0..m {
                        let t = coords[i] - coords[j];
                        out[(i, j)] = base[(i, j)] * 0.5 * t * t / r.bandwidths[d];
                    }
                }
            }
            Kernel::Sm(_) | Kernel::SmProduct(_) => {
                let s1 = match self {
                    Kernel::Sm(s) => Sm1d {
                        weights: s.weights.clone(),
                        means: s.means.iter().map(|v| v[0]).collect(),
                        variances: s.variances.iter().map(|v| v[0]).collect(),
                    },
                    Kernel::SmProduct(s) => s.dims[d].clone(),
                    Kernel::Rbf(_) => unreachable!(),
                };
                let local = p - self.factor_params(d).start;
                let mut buf = vec![0.0; 3 * s1.q()];
                for i in 0..m {
                    for j in 0..=i {
                        s1.grad(coords[i] - coords[j], &mut buf);
                        out[(i, j)] = buf[local];
                        out[(j, i)] = buf[local];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Squared exponential kernel matrix.
pub fn rbf_eval(p: &RbfParams, x: &PointSet, y: &PointSet) -> Result<Mat<f64>> {
    Kernel::Rbf(p.clone()).eval(x, y)
}

/// Joint spectral mixture kernel matrix.
pub fn sm_eval(p: &SmParams, x: &PointSet, y: &PointSet) -> Result<Mat<f64>> {
    Kernel::Sm(p.clone()).eval(x, y)
}

/// Per-dimension product spectral mixture kernel matrix.
pub fn sm_eval_1d_product(p: &SmProductParams, x: &PointSet, y: &PointSet) -> Result<Mat<f64>> {
    Kernel::SmProduct(p.clone()).eval(x, y)
}

/// One Kronecker factor per grid axis.
pub fn grid_factors(kernel: &Kernel, grid: &GridSpec) -> Result<KronMatrix> {
    if !kernel.is_multiplicative() {
        return Err(GpcsError::NotMultiplicative);
    }
    if kernel.dim() != grid.dim() {
        return Err(GpcsError::Dimension(format!(
            "kernel is {}-dimensional, grid is {}-dimensional",
            kernel.dim(),
            grid.dim()
        )));
    }
    KronMatrix::new(
        grid.axes()
            .iter()
            .enumerate()
            .map(|(d, axis)| kernel.factor(d, axis))
            .collect::<Result<_>>()?,
    )
}
