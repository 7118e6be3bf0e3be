// SPDX-License-Identifier: MIT OR Apache-2.0

//! Marginal likelihood (exact and bound-approximated), log-determinant
//! bounds, prediction and hyperparameter optimization.

use std::fmt;
use std::str::FromStr;
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;
#[cfg(target_arch = "wasm32")]
use web_time::Instant;

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{detect_grid, Dataset, GridMatch, GridSpec, PointSet, DEFAULT_GRID_TOL};
use crate::dense::{dot, Cholesky, JITTER_REL};
use crate::error::{GpcsError, Result};
use crate::kernels::HyperVector;
use crate::kron::{
    cg_solve, interp_weights, kron_eigvals_from_factors, EigenList, InterpOperator, ScaledKronSum,
};
use crate::surface::{gpcs_cov, gpcs_operator, gpcs_operator_with, ChangeSurfaceModel};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Dense factorizations above this size are refused.
pub const DENSE_LIMIT: usize = 10_000;

/// How the log-determinant is computed or bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
#[derive(Default)]
pub enum LogDetMethod {
    #[default]
    Exact,
    Fiedler,
    WeylExact,
    WeylMiddle,
    WeylGreedy {
        v: usize,
    },
}

impl fmt::Display for LogDetMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogDetMethod::Exact => write!(f, "exact"),
            LogDetMethod::Fiedler => write!(f, "fiedler"),
            LogDetMethod::WeylExact => write!(f, "weyl-exact"),
            LogDetMethod::WeylMiddle => write!(f, "weyl-middle"),
            LogDetMethod::WeylGreedy { v } => write!(f, "weyl-greedy:{v}"),
        }
    }
}

impl FromStr for LogDetMethod {
    type Err = GpcsError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match s.as_str() {
            "exact" => LogDetMethod::Exact,
            "fiedler" => LogDetMethod::Fiedler,
            "weyl-exact" => LogDetMethod::WeylExact,
            "weyl-middle" => LogDetMethod::WeylMiddle,
            "weyl-greedy" => LogDetMethod::WeylGreedy { v: 80 },
            other => match other.strip_prefix("weyl-greedy:") {
                Some(v) => {
                    let v: usize = v.parse().map_err(|_| {
                        GpcsError::InvalidParameter(format!("bad greedy width {v:?}"))
                    })?;
                    if v == 0 {
                        return Err(GpcsError::InvalidParameter(
                            "greedy width must be >= 1".into(),
                        ));
                    }
                    LogDetMethod::WeylGreedy { v }
                }
                None => {
                    return Err(GpcsError::InvalidParameter(format!(
                        "unknown log-det method {other:?}"
                    )))
                }
            },
        })
    }
}

fn log_terms(values: impl Iterator<Item = f64>, noise: f64) -> Result<f64> {
    let mut total = 0.0;
    for v in values {
        let t = v.max(0.0) + noise;
        if !(t > 0.0) {
            return Err(GpcsError::LogOfZero);
        }
        total += t.ln();
    }
    Ok(total)
}

/// `Σ_i log(α_i + β_{n−i+1} + σ²)`, an upper bound on `log|A + B + σ²I|`.
pub fn fiedler_logdet(alpha: &EigenList, beta: &EigenList, noise: f64) -> Result<f64> {
    if alpha.len() != beta.len() {
        return Err(GpcsError::Dimension(
            "fiedler bound needs equal-length spectra".into(),
        ));
    }
    let a = alpha.clamped();
    let b = beta.clamped();
    log_terms(
        a.values()
            .iter()
            .zip(b.values().iter().rev())
            .map(|(x, y)| x + y),
        noise,
    )
}

fn middle_index(k: usize) -> usize {
    // 1-based i for μ_k with i = j when k is odd, i = j + 1 otherwise.
    if k % 2 == 1 {
        k.div_ceil(2)
    } else {
        k / 2 + 1
    }
}

/// Upper bounds on the sorted eigenvalues of `A + B` from Weyl's
/// inequality `μ_{i+j−1} ≤ α_i + β_j`, made non-increasing.
pub fn weyl_pair_bound(a: &[f64], b: &[f64], method: LogDetMethod) -> Result<Vec<f64>> {
    let n = a.len();
    if b.len() != n {
        return Err(GpcsError::Dimension(
            "weyl bound needs equal-length spectra".into(),
        ));
    }
    let mut out = Vec::with_capacity(n);
    let mut prev = 1usize;
    for k in 1..=n {
        let pair = |i: usize| a[i - 1] + b[k - i];
        let mid = middle_index(k).min(k);
        let (best_i, best) = match method {
            LogDetMethod::WeylMiddle => (mid, pair(mid)),
            LogDetMethod::WeylExact => (1..=k)
                .map(|i| (i, pair(i)))
                .fold((mid, pair(mid)), |acc, c| if c.1 < acc.1 { c } else { acc }),
            LogDetMethod::WeylGreedy { v } => {
                let mut acc = (mid, pair(mid));
                if v > 1 {
                    let lo = prev.saturating_sub(v / 2).max(1);
                    let hi = (prev + v - v / 2 - 1).min(k);
                    for i in lo..=hi {
                        let c = pair(i);
                        if c < acc.1 {
                            acc = (i, c);
                        }
                    }
                }
                acc
            }
            other => {
                return Err(GpcsError::InvalidParameter(format!(
                    "{other} is not a Weyl method"
                )));
            }
        };
        prev = best_i;
        let bound = match out.last() {
            Some(&last) if last < best => last,
            _ => best,
        };
        out.push(bound);
    }
    Ok(out)
}

/// Weyl bound on `log|Σ_i A_i + σ²I|` from the spectra of the `A_i`,
/// reducing pairwise from left to right.
pub fn weyl_logdet(spectra: &[EigenList], noise: f64, method: LogDetMethod) -> Result<f64> {
    if spectra.is_empty() {
        return Err(GpcsError::Dimension(
            "weyl bound needs at least one spectrum".into(),
        ));
    }
    let mut acc = spectra[0].clamped().into_vec();
    for s in &spectra[1..] {
        acc = weyl_pair_bound(&acc, s.clamped().values(), method)?;
    }
    log_terms(acc.into_iter(), noise)
}

/// Dispatches to the Fiedler or Weyl bound.
pub fn logdet_bound(spectra: &[EigenList], noise: f64, method: LogDetMethod) -> Result<f64> {
    match method {
        LogDetMethod::Fiedler => {
            if spectra.len() != 2 {
                return Err(GpcsError::InvalidParameter(format!(
                    "fiedler bound needs exactly two terms, got {}",
                    spectra.len()
                )));
            }
            fiedler_logdet(&spectra[0], &spectra[1], noise)
        }
        LogDetMethod::Exact => Err(GpcsError::InvalidParameter(
            "the exact method has no spectral bound".into(),
        )),
        _ => weyl_logdet(spectra, noise, method),
    }
}

/// Elementwise product of the three sorted spectra, re-sorted.
pub fn scaled_spectrum(
    s_left: &EigenList,
    k: &EigenList,
    s_right: &EigenList,
) -> Result<EigenList> {
    if s_left.len() != k.len() || s_right.len() != k.len() {
        return Err(GpcsError::Dimension(
            "scaled spectrum needs equal lengths".into(),
        ));
    }
    Ok(EigenList::new(
        s_left
            .values()
            .iter()
            .zip(k.clamped().values())
            .zip(s_right.values())
            .map(|((a, b), c)| a * b * c)
            .collect(),
    ))
}

/// Exact `log|A|` of an operator via a dense Cholesky.
pub fn exact_logdet(op: &ScaledKronSum) -> Result<f64> {
    if op.len() > DENSE_LIMIT {
        return Err(GpcsError::InvalidParameter(format!(
            "{} points exceed the dense limit",
            op.len()
        )));
    }
    Ok(Cholesky::new(&op.dense(), 0.0)?.logdet())
}

fn nll_jitter(model: &ChangeSurfaceModel) -> f64 {
    let s2 = model.signal_variance();
    if model.noise >= JITTER_REL * s2 {
        0.0
    } else {
        JITTER_REL * s2
    }
}

/// `½ log|K| + ½ yᵀK⁻¹y + (n/2) log 2π` for a dense covariance.
pub fn gaussian_nll(k: &Mat<f64>, y: &[f64], jitter: f64) -> Result<f64> {
    let c = Cholesky::new(k, jitter)?;
    let alpha = c.solve(y);
    Ok(0.5 * c.logdet() + 0.5 * dot(y, &alpha) + 0.5 * y.len() as f64 * LN_2PI)
}

fn check_data(model: &ChangeSurfaceModel, data: &Dataset) -> Result<()> {
    if data.dim() != model.dim() {
        return Err(GpcsError::Dimension(format!(
            "model is {}-dimensional, data is {}-dimensional",
            model.dim(),
            data.dim()
        )));
    }
    if data.len() > DENSE_LIMIT {
        return Err(GpcsError::InvalidParameter(format!(
            "{} points exceed the dense limit of {DENSE_LIMIT}",
            data.len()
        )));
    }
    Ok(())
}

/// Everything the exact path computes for one parameter vector.
struct ExactState {
    value: f64,
    chol: Cholesky,
    alpha: Vec<f64>,
    s: Vec<Vec<f64>>,
    kmats: Vec<Mat<f64>>,
}

fn exact_state(model: &ChangeSurfaceModel, data: &Dataset) -> Result<ExactState> {
    check_data(model, data)?;
    let x = data.inputs();
    let n = x.len();
    let s = model.weights(x)?;
    let comps = model.components();
    let kmats: Vec<Mat<f64>> = comps
        .iter()
        .map(|c| c.kernel.gram(x))
        .collect::<Result<_>>()?;
    let mut k = Mat::<f64>::zeros(n, n);
    for (c, km) in comps.iter().zip(&kmats) {
        match c.regime {
            Some(r) => {
                let sr = &s[r];
                for j in 0..n {
                    for i in 0..n {
                        k[(i, j)] += sr[i] * km[(i, j)] * sr[j];
                    }
                }
            }
            None => {
                for j in 0..n {
                    for i in 0..n {
                        k[(i, j)] += km[(i, j)];
                    }
                }
            }
        }
    }
    for i in 0..n {
        k[(i, i)] += model.noise;
    }
    let chol = Cholesky::new(&k, nll_jitter(model))?;
    let y = data.responses();
    let alpha = chol.solve(y);
    let value = 0.5 * chol.logdet() + 0.5 * dot(y, &alpha) + 0.5 * n as f64 * LN_2PI;
    Ok(ExactState {
        value,
        chol,
        alpha,
        s,
        kmats,
    })
}

/// Exact negative log marginal likelihood.
pub fn exact_nll(model: &ChangeSurfaceModel, data: &Dataset) -> Result<f64> {
    Ok(exact_state(model, data)?.value)
}

/// Exact negative log marginal likelihood and its gradient with respect to
/// the packed hyperparameters.
pub fn exact_nll_grad(model: &ChangeSurfaceModel, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    let st = exact_state(model, data)?;
    let grad = exact_grad_from_state(model, data, &st)?;
    Ok((st.value, grad))
}

fn exact_grad_from_state(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    st: &ExactState,
) -> Result<Vec<f64>> {
    let x = data.inputs();
    let n = x.len();
    let layout = model.layout();
    let mut grad = vec![0.0; layout.len()];

    // W = K⁻¹ − ααᵀ so that ∂NLL/∂θ = ½ tr(W ∂K/∂θ).
    let mut w = st.chol.inverse();
    for j in 0..n {
        for i in 0..n {
            w[(i, j)] -= st.alpha[i] * st.alpha[j];
        }
    }

    let comps = model.components();
    let r = model.r();
    let mut g = vec![vec![0.0; n]; r];
    for (c, km) in comps.iter().zip(&st.kmats) {
        let np = c.params.len();
        let mut buf = vec![0.0; np];
        let mut acc = vec![0.0; np];
        for i in 0..n {
            let xi = x.row(i);
            for j in 0..=i {
                let mut weight = if i == j { 0.5 } else { 1.0 } * w[(i, j)];
                if let Some(reg) = c.regime {
                    weight *= st.s[reg][i] * st.s[reg][j];
                }
                if weight == 0.0 {
                    continue;
                }
                c.kernel.pair_grad(xi, x.row(j), &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += weight * b;
                }
            }
        }
        for (p, a) in c.params.clone().zip(acc) {
            grad[p] += a;
        }
        if let Some(reg) = c.regime {
            let sr = &st.s[reg];
            for i in 0..n {
                let mut v = 0.0;
                for j in 0..n {
                    v += w[(i, j)] * km[(i, j)] * sr[j];
                }
                g[reg][i] = v;
            }
        }
    }

    // ∂NLL/∂s_i(x) = g_i(x); push through the softmax to the warps.
    for (j, warp) in model.warps.iter().enumerate() {
        let range = layout.warps[j].clone();
        if range.is_empty() {
            continue;
        }
        let mut buf = vec![0.0; range.len()];
        for xi in 0..n {
            let mix: f64 = (0..r).map(|i| st.s[i][xi] * g[i][xi]).sum();
            let h = st.s[j][xi] * (g[j][xi] - mix);
            if h == 0.0 {
                continue;
            }
            warp.grad_point(x.row(xi), &mut buf);
            for (p, b) in range.clone().zip(&buf) {
                grad[p] += h * b;
            }
        }
    }

    let trace: f64 = (0..n).map(|i| w[(i, i)]).sum();
    grad[layout.noise] = 0.5 * trace * model.noise;
    Ok(grad)
}

/// Grid structure used by the bound-approximated likelihood.
#[derive(Clone, Debug)]
pub enum Structure {
    /// Inputs form a complete grid.
    Grid(GridMatch),
    /// Inputs interpolated onto a latent grid.
    Interp {
        grid: GridSpec,
        weights: InterpOperator,
    },
}

impl Structure {
    /// Uses the data's own grid when it has one, otherwise interpolates onto
    /// a uniform grid of `latent` sizes (default: `⌈n^{1/D}⌉` per axis).
    pub fn detect(data: &Dataset, latent: Option<&[usize]>) -> Result<Self> {
        if latent.is_none() {
            if let Some(m) = detect_grid(data, DEFAULT_GRID_TOL) {
                return Ok(Structure::Grid(m));
            }
        }
        let d = data.dim();
        let sizes = match latent {
            Some(s) => s.to_vec(),
            None => vec![(data.len() as f64).powf(1.0 / d as f64).ceil() as usize; d],
        };
        let grid = GridSpec::uniform(&data.inputs().bounds(), &sizes)?;
        Self::interp(data, grid)
    }

    pub fn interp(data: &Dataset, grid: GridSpec) -> Result<Self> {
        let weights = interp_weights(&grid, data.inputs())?;
        Ok(Structure::Interp { grid, weights })
    }

    pub fn grid(&self) -> &GridSpec {
        match self {
            Structure::Grid(m) => &m.grid,
            Structure::Interp { grid, .. } => grid,
        }
    }
}

/// Settings for the conjugate gradient solves of the bound path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

/// Result of [`approx_nll`].
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxNll {
    pub value: f64,
    pub logdet: f64,
    pub quad: f64,
    pub cg_iterations: usize,
    pub cg_converged: bool,
}

/// Structured operator and responses in operator order.
fn structured_operator(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    structure: &Structure,
) -> Result<(ScaledKronSum, Vec<f64>)> {
    match structure {
        Structure::Grid(m) => Ok((
            gpcs_operator(model, &m.grid)?,
            m.to_grid_order(data.responses()),
        )),
        Structure::Interp { grid, weights } => Ok((
            gpcs_operator_with(model, data.inputs(), grid, weights.clone())?,
            data.responses().to_vec(),
        )),
    }
}

/// Per-term spectra `sort(s) · sort(eig K_i) · sort(s)` of a structured
/// operator. Latent-grid eigenvalues are rescaled by `n/m`.
pub fn term_spectra(op: &ScaledKronSum) -> Result<Vec<EigenList>> {
    let n = op.len();
    op.terms()
        .iter()
        .map(|t| {
            let k = kron_eigvals_from_factors(&t.kron.factor_eigvals()?);
            let m = k.len();
            let k = if m == n {
                k
            } else {
                k.scaled(n as f64 / m as f64).resized(n)
            };
            scaled_spectrum(
                &EigenList::new(t.left.clone()),
                &k,
                &EigenList::new(t.right.clone()),
            )
        })
        .collect()
}

/// Negative log marginal likelihood with a CG quadratic term and a bound
/// on the log-determinant.
pub fn approx_nll(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    structure: &Structure,
    method: LogDetMethod,
    cg: CgOptions,
) -> Result<ApproxNll> {
    if method == LogDetMethod::Exact {
        return Err(GpcsError::InvalidParameter(
            "approx_nll needs a bound method".into(),
        ));
    }
    if data.dim() != model.dim() {
        return Err(GpcsError::Dimension(
            "model and data dimensions differ".into(),
        ));
    }
    let (op, y) = structured_operator(model, data, structure)?;
    let sol = cg_solve(|v| op.matvec(v), &y, cg.tol, cg.max_iter)?;
    let kx = op.matvec(&sol.x)?;
    // 2yᵀx − xᵀKx agrees with yᵀK⁻¹y to second order in the CG error.
    let quad = 2.0 * dot(&y, &sol.x) - dot(&sol.x, &kx);
    let logdet = logdet_bound(&term_spectra(&op)?, op.noise(), method)?;
    let n = y.len() as f64;
    Ok(ApproxNll {
        value: 0.5 * logdet + 0.5 * quad + 0.5 * n * LN_2PI,
        logdet,
        quad,
        cg_iterations: sol.iterations,
        cg_converged: sol.converged,
    })
}

/// Predictive mean and variances at query points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    /// Variance of the latent function (noise excluded).
    pub latent_var: Vec<f64>,
    /// Variance of a new observation (noise included).
    pub var: Vec<f64>,
}

/// GP posterior predictive at `x_star` given training `data`.
pub fn predict(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    x_star: &PointSet,
) -> Result<Prediction> {
    let st = exact_state(model, data)?;
    let kxs = gpcs_cov(model, data.inputs(), x_star)?;
    let a = x_star.len();
    let mean: Vec<f64> = (0..a)
        .map(|j| (0..data.len()).map(|i| kxs[(i, j)] * st.alpha[i]).sum())
        .collect();
    let v = st.chol.lower_solve(&kxs);
    let s = model.weights(x_star)?;
    let latent_var: Vec<f64> = (0..a)
        .map(|j| {
            let prior: f64 = model
                .components()
                .iter()
                .map(|c| {
                    let sc = c.regime.map_or(1.0, |r| s[r][j] * s[r][j]);
                    sc * c.kernel.variance()
                })
                .sum();
            let explained: f64 = (0..data.len()).map(|i| v[(i, j)] * v[(i, j)]).sum();
            (prior - explained).max(0.0)
        })
        .collect();
    let var = latent_var.iter().map(|v| v + model.noise).collect();
    Ok(Prediction {
        mean,
        latent_var,
        var,
    })
}

/// Gradient source for [`fit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum GradientScheme {
    Analytic,
    FiniteDifference { h: f64 },
}

/// Optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub gradient: GradientScheme,
    pub logdet: LogDetMethod,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Latent grid sizes for the bound path on scattered data.
    pub latent_grid: Option<Vec<usize>>,
    /// Standard deviation of the Gaussian perturbation applied to the
    /// initial parameters for restarts after the first.
    pub restart_jitter: f64,
    /// Relative objective decrease below which optimization stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iter: 200,
            gradient: GradientScheme::Analytic,
            logdet: LogDetMethod::Exact,
            cg_tol: 1e-6,
            cg_max_iter: 1000,
            latent_grid: None,
            restart_jitter: 0.1,
            tol: 1e-9,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(GpcsError::InvalidParameter("restarts must be >= 1".into()));
        }
        if let GradientScheme::FiniteDifference { h } = self.gradient {
            if !(h > 0.0) {
                return Err(GpcsError::InvalidParameter(
                    "finite-difference step must be > 0".into(),
                ));
            }
        }
        if self.gradient == GradientScheme::Analytic && self.logdet != LogDetMethod::Exact {
            return Err(GpcsError::InvalidParameter(
                "bound methods have no analytic gradient; use finite differences".into(),
            ));
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return Err(GpcsError::InvalidParameter(
                "cg tolerance and iteration cap must be positive".into(),
            ));
        }
        if let (LogDetMethod::WeylGreedy { v: 0 }, _) = (self.logdet, ()) {
            return Err(GpcsError::InvalidParameter(
                "greedy width must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Bound-path settings: the given method with central differences.
    pub fn bound(method: LogDetMethod) -> Self {
        Self {
            logdet: method,
            gradient: GradientScheme::FiniteDifference { h: 1e-4 },
            ..Self::default()
        }
    }
}

/// Wall-clock seconds spent fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_secs: f64,
    pub per_restart_secs: Vec<f64>,
}

/// Outcome of [`fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ChangeSurfaceModel,
    pub hyper: HyperVector,
    pub best_nll: f64,
    pub restart_nlls: Vec<f64>,
    /// Objective after each accepted step of the best restart, starting
    /// with the initial value.
    pub trace: Vec<f64>,
    pub traces: Vec<Vec<f64>>,
    pub iterations: usize,
    pub logdet: LogDetMethod,
    pub timings: Timings,
}

/// A differentiable objective for [`minimize`].
pub trait Objective {
    /// Objective value; failures map to `+∞`.
    fn value(&mut self, x: &[f64]) -> f64;
    fn value_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Outcome of [`minimize`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MAX_BACKTRACK: usize = 40;

/// Polak–Ribière (PR+) nonlinear conjugate gradients with backtracking
/// Armijo line search. Every accepted step strictly decreases the value.
pub fn minimize<O: Objective>(
    obj: &mut O,
    x0: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<OptResult> {
    let mut x = x0.to_vec();
    let (mut f, mut g) = match obj.value_grad(&x) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, g),
        Ok(_) | Err(_) => {
            return Ok(OptResult {
                x,
                value: f64::NAN,
                trace: vec![f64::NAN],
                iterations: 0,
            })
        }
    };
    let mut trace = vec![f];
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut prev_step: Option<f64> = None;
    let mut prev_slope = 0.0;
    let mut iterations = 0;
    let p = x.len();
    if p == 0 {
        return Ok(OptResult {
            x,
            value: f,
            trace,
            iterations,
        });
    }
    while iterations < max_iter {
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        if slope == 0.0 {
            break;
        }
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = match prev_step {
            Some(ps) if prev_slope < 0.0 => (ps * prev_slope / slope).min(1.0 / dmax).max(1e-12),
            _ => (1.0 / dmax).min(1.0),
        };
        t = t.min(1.0 / dmax);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let ft = obj.value(&xt);
            if ft.is_finite() && ft <= f + ARMIJO_C * t * slope && ft < f {
                accepted = Some((xt, ft));
                break;
            }
            t *= SHRINK;
        }
        let Some((xn, _)) = accepted else {
            if d.iter().zip(&g).any(|(a, b)| *a != -*b) {
                d = g.iter().map(|v| -v).collect();
                prev_step = None;
                continue;
            }
            break;
        };
        let (fn_, gn) = match obj.value_grad(&xn) {
            Ok((fv, gv)) if fv.is_finite() && gv.iter().all(|v| v.is_finite()) => (fv, gv),
            _ => break,
        };
        iterations += 1;
        let decrease = f - fn_;
        x = xn;
        trace.push(fn_);
        let gg = dot(&g, &g);
        let beta = if gg > 0.0 {
            (gn.iter().zip(&g).map(|(a, b)| a * (a - b)).sum::<f64>() / gg).max(0.0)
        } else {
            0.0
        };
        f = fn_;
        g = gn;
        prev_step = Some(t);
        prev_slope = slope;
        d = g.iter().zip(&d).map(|(gi, di)| -gi + beta * di).collect();
        if iterations % (p + 1) == 0 {
            d = g.iter().map(|v| -v).collect();
        }
        if decrease <= tol * (1.0 + f.abs()) {
            break;
        }
        if g.iter().all(|v| v.abs() < 1e-8) {
            break;
        }
    }
    Ok(OptResult {
        x,
        value: f,
        trace,
        iterations,
    })
}

/// Exact-path objective over packed hyperparameters; caches the last
/// factorization so the gradient at an accepted point is cheap.
pub struct ExactObjective<'a> {
    template: &'a ChangeSurfaceModel,
    data: &'a Dataset,
    cache: Option<(Vec<f64>, ChangeSurfaceModel, ExactState)>,
}

impl<'a> ExactObjective<'a> {
    pub fn new(template: &'a ChangeSurfaceModel, data: &'a Dataset) -> Self {
        Self {
            template,
            data,
            cache: None,
        }
    }

    fn state(&mut self, x: &[f64]) -> Result<&(Vec<f64>, ChangeSurfaceModel, ExactState)> {
        let hit = matches!(&self.cache, Some((cx, _, _)) if cx.as_slice() == x);
        if !hit {
            self.cache = None;
            let model = self.template.unpack(x)?;
            let st = exact_state(&model, self.data)?;
            self.cache = Some((x.to_vec(), model, st));
        }
        Ok(self.cache.as_ref().unwrap())
    }
}

impl Objective for ExactObjective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        match self.state(x) {
            Ok((_, _, st)) if st.value.is_finite() => st.value,
            _ => f64::INFINITY,
        }
    }

    fn value_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let data = self.data;
        let (_, model, st) = self.state(x)?;
        let grad = exact_grad_from_state(model, data, st)?;
        Ok((st.value, grad))
    }
}

/// Any objective value function with central finite-difference gradients.
pub struct FiniteDiffObjective<F> {
    f: F,
    h: f64,
}

impl<F: FnMut(&[f64]) -> Result<f64>> FiniteDiffObjective<F> {
    pub fn new(f: F, h: f64) -> Self {
        Self { f, h }
    }
}

impl<F: FnMut(&[f64]) -> Result<f64>> Objective for FiniteDiffObjective<F> {
    fn value(&mut self, x: &[f64]) -> f64 {
        match (self.f)(x) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }

    fn value_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f0 = (self.f)(x)?;
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + self.h;
            let fp = (self.f)(&xp)?;
            xp[i] = x[i] - self.h;
            let fm = (self.f)(&xp)?;
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * self.h);
        }
        Ok((f0, g))
    }
}

/// Optimizes the hyperparameters of `model_init` on standardized `data`.
///
/// Restart 0 starts from the initial parameters; later restarts perturb
/// them with seeded Gaussian noise. The best restart is returned.
pub fn fit(
    model_init: &ChangeSurfaceModel,
    data: &Dataset,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    model_init.validate()?;
    let start = Instant::now();
    let theta0 = model_init.pack();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let structure = if config.logdet == LogDetMethod::Exact {
        None
    } else {
        Some(Structure::detect(data, config.latent_grid.as_deref())?)
    };

    let mut runs: Vec<(OptResult, f64)> = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let t0 = Instant::now();
        let x0: Vec<f64> = if restart == 0 {
            theta0.clone()
        } else {
            theta0
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + config.restart_jitter * z
                })
                .collect()
        };
        let res = match (&structure, config.gradient) {
            (None, GradientScheme::Analytic) => {
                let mut obj = ExactObjective::new(model_init, data);
                minimize(&mut obj, &x0, config.max_iter, config.tol)?
            }
            (None, GradientScheme::FiniteDifference { h }) => {
                let mut obj = FiniteDiffObjective::new(
                    |t: &[f64]| exact_nll(&model_init.unpack(t)?, data),
                    h,
                );
                minimize(&mut obj, &x0, config.max_iter, config.tol)?
            }
            (Some(st), scheme) => {
                let h = match scheme {
                    GradientScheme::FiniteDifference { h } => h,
                    GradientScheme::Analytic => 1e-4,
                };
                let cg = CgOptions {
                    tol: config.cg_tol,
                    max_iter: config.cg_max_iter,
                };
                let mut obj = FiniteDiffObjective::new(
                    |t: &[f64]| {
                        Ok(approx_nll(&model_init.unpack(t)?, data, st, config.logdet, cg)?.value)
                    },
                    h,
                );
                minimize(&mut obj, &x0, config.max_iter, config.tol)?
            }
        };
        log::info!(
            "restart {restart}: nll {:.6} after {} iterations",
            res.value,
            res.iterations
        );
        runs.push((res, t0.elapsed().as_secs_f64()));
    }

    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, (r, _))| r.value.is_finite())
        .min_by(|a, b| a.1 .0.value.total_cmp(&b.1 .0.value))
        .map(|(i, _)| i);
    let traces: Vec<Vec<f64>> = runs.iter().map(|(r, _)| r.trace.clone()).collect();
    let Some(best) = best else {
        return Err(GpcsError::Diverged { traces });
    };
    let model = model_init.unpack(&runs[best].0.x)?;
    Ok(FitResult {
        hyper: model.hyper_vector(),
        model,
        best_nll: runs[best].0.value,
        restart_nlls: runs.iter().map(|(r, _)| r.value).collect(),
        trace: runs[best].0.trace.clone(),
        traces,
        iterations: runs[best].0.iterations,
        logdet: config.logdet,
        timings: Timings {
            total_secs: start.elapsed().as_secs_f64(),
            per_restart_secs: runs.iter().map(|(_, t)| *t).collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense;
    use crate::kernels::{Kernel, Sm1d, SmProductParams};
    use crate::surface::{LinearWarp, RksWarp, Warp};
    use rand::Rng;

    fn rand_psd(rng: &mut impl Rng, n: usize, rank: usize) -> Mat<f64> {
        let a = Mat::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose()
    }

    fn exact_sum_logdet(mats: &[Mat<f64>], noise: f64) -> f64 {
        let n = mats[0].nrows();
        let mut s = Mat::<f64>::zeros(n, n);
        for m in mats {
            s = &s + m;
        }
        dense::sym_eigvals(&s)
            .unwrap()
            .iter()
            .map(|v| (v.max(0.0) + noise).ln())
            .sum()
    }

    fn spectrum(m: &Mat<f64>) -> EigenList {
        EigenList::new(dense::sym_eigvals(m).unwrap())
    }

    #[test]
    fn fiedler_examples() {
        let id = EigenList::new(vec![1.0; 5]);
        assert!((fiedler_logdet(&id, &id, 0.0).unwrap() - 5.0 * 2f64.ln()).abs() < 1e-12);
        let a = EigenList::new(vec![3.0, 1.0]);
        let b = EigenList::new(vec![2.0, 4.0]);
        let bound = fiedler_logdet(&a, &b, 0.0).unwrap();
        assert!((bound - 25f64.ln()).abs() < 1e-12);
        // diag(3,1) + diag(2,4) = diag(5,5)
        assert!(bound >= 25f64.ln() - 1e-12);
        let z = EigenList::new(vec![0.0; 3]);
        assert!(matches!(
            fiedler_logdet(&z, &z, 0.0),
            Err(GpcsError::LogOfZero)
        ));
    }

    #[test]
    fn weyl_identity_spectra_under_every_method() {
        let id = EigenList::new(vec![1.0; 6]);
        for m in [
            LogDetMethod::WeylExact,
            LogDetMethod::WeylMiddle,
            LogDetMethod::WeylGreedy { v: 3 },
        ] {
            assert!(
                (weyl_logdet(&[id.clone(), id.clone()], 0.0, m).unwrap() - 6.0 * 2f64.ln()).abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn weyl_middle_hand_trace() {
        // k=1: i=j=1 -> 4+3; k=2: i=2, j=1 -> 2+3.
        let a = EigenList::new(vec![4.0, 2.0]);
        let b = EigenList::new(vec![3.0, 1.0]);
        let v = weyl_logdet(&[a, b], 0.0, LogDetMethod::WeylMiddle).unwrap();
        assert!((v - 35f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn greedy_width_one_is_middle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = spectrum(&rand_psd(&mut rng, 30, 30));
        let b = spectrum(&rand_psd(&mut rng, 30, 5));
        let mid = weyl_logdet(&[a.clone(), b.clone()], 0.1, LogDetMethod::WeylMiddle).unwrap();
        let g1 = weyl_logdet(&[a, b], 0.1, LogDetMethod::WeylGreedy { v: 1 }).unwrap();
        assert_eq!(mid, g1);
    }

    #[test]
    fn bound_chain_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = 64;
            let (ra, rb) = (rng.random_range(1..n), rng.random_range(1..n));
            let a = rand_psd(&mut rng, n, ra);
            let b = rand_psd(&mut rng, n, rb);
            let noise = rng.random_range(0.01..1.0);
            let exact = exact_sum_logdet(&[a.clone(), b.clone()], noise);
            let sp = [spectrum(&a), spectrum(&b)];
            let we = weyl_logdet(&sp, noise, LogDetMethod::WeylExact).unwrap();
            let wg = weyl_logdet(&sp, noise, LogDetMethod::WeylGreedy { v: 8 }).unwrap();
            let wm = weyl_logdet(&sp, noise, LogDetMethod::WeylMiddle).unwrap();
            let fd = fiedler_logdet(&sp[0], &sp[1], noise).unwrap();
            assert!(exact <= we + 1e-9 && we <= wg + 1e-12 && wg <= wm + 1e-12);
            assert!(exact <= fd + 1e-9);
        }
    }

    #[test]
    fn scaled_spectrum_examples() {
        let k = EigenList::new(vec![5.0, 3.0, 1.0]);
        let ones = EigenList::new(vec![1.0; 3]);
        assert_eq!(scaled_spectrum(&ones, &k, &ones).unwrap(), k);
        let c = EigenList::new(vec![0.5; 3]);
        assert_eq!(
            scaled_spectrum(&c, &k, &c).unwrap().values(),
            &[1.25, 0.75, 0.25]
        );
    }

    #[test]
    fn scaled_spectrum_log_majorizes_true_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = 32;
            let k = rand_psd(&mut rng, n, n);
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let sks = Mat::from_fn(n, n, |i, j| s[i] * k[(i, j)] * s[j]);
            let truth = dense::sym_eigvals(&sks).unwrap();
            let bound = scaled_spectrum(
                &EigenList::new(s.clone()),
                &spectrum(&k),
                &EigenList::new(s),
            )
            .unwrap();
            let (mut lt, mut lb) = (0.0, 0.0);
            for (t, b) in truth.iter().zip(bound.values()) {
                lt += t.max(1e-300).ln();
                lb += b.max(1e-300).ln();
                assert!(lt <= lb + 1e-8);
            }
            let noise = 0.05;
            let lt: f64 = truth.iter().map(|t| (t.max(0.0) + noise).ln()).sum();
            let lb: f64 = bound.values().iter().map(|b| (b + noise).ln()).sum();
            assert!(lt <= lb + 1e-9);
        }
    }

    fn rks(rng: &mut impl Rng, m: usize, d: usize) -> Warp {
        Warp::Rks(RksWarp {
            amplitudes: (0..m).map(|_| rng.random_range(-2.0..2.0)).collect(),
            frequencies: (0..m)
                .map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect())
                .collect(),
            phases: (0..m)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect(),
        })
    }

    fn random_model(rng: &mut impl Rng, d: usize) -> ChangeSurfaceModel {
        let k1 = Kernel::rbf(
            rng.random_range(0.5..2.0),
            (0..d).map(|_| rng.random_range(0.01..0.3)).collect(),
        );
        let k2 = Kernel::SmProduct(SmProductParams {
            dims: (0..d)
                .map(|_| Sm1d {
                    weights: vec![rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)],
                    means: vec![rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)],
                    variances: vec![rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)],
                })
                .collect(),
        });
        ChangeSurfaceModel::two_regime(rks(rng, 4, d), k1, k2, rng.random_range(0.05..0.3)).unwrap()
    }

    fn random_data(rng: &mut impl Rng, n: usize, d: usize) -> Dataset {
        let x = PointSet::new(d, (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        Dataset::new(x, (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn scalar_and_pure_noise_cases() {
        let k = Mat::from_fn(1, 1, |_, _| 1.0);
        let v = gaussian_nll(&k, &[0.0], 1e-8).unwrap();
        assert!((v - (0.5 * (1.0f64 + 1e-8).ln() + 0.5 * LN_2PI)).abs() < 1e-15);
        let y = [0.3, -1.2, 2.0];
        let v = gaussian_nll(&Mat::identity(3, 3), &y, 0.0).unwrap();
        assert!((v - (0.5 * dot(&y, &y) + 1.5 * LN_2PI)).abs() < 1e-12);
    }

    #[test]
    fn exact_nll_matches_naive_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, 2);
        let data = random_data(&mut rng, 50, 2);
        let mut k = gpcs_cov(&m, data.inputs(), data.inputs()).unwrap();
        for i in 0..50 {
            k[(i, i)] += m.noise + nll_jitter(&m);
        }
        use faer::linalg::solvers::DenseSolveCore;
        let inv = k.partial_piv_lu().inverse();
        let y = data.responses();
        let quad = dot(y, &dense::matvec(&inv, y));
        let logdet: f64 = dense::sym_eigvals(&k).unwrap().iter().map(|v| v.ln()).sum();
        let naive = 0.5 * logdet + 0.5 * quad + 25.0 * LN_2PI;
        assert!((exact_nll(&m, &data).unwrap() - naive).abs() < 1e-8 * naive.abs().max(1.0));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let m = random_model(&mut rng, 2);
            let data = random_data(&mut rng, 30, 2);
            let (_, g) = exact_nll_grad(&m, &data).unwrap();
            let theta = m.pack();
            for p in 0..theta.len() {
                let h = 1e-5;
                let mut tp = theta.clone();
                tp[p] += h;
                let mut tm = theta.clone();
                tm[p] -= h;
                let fd = (exact_nll(&m.unpack(&tp).unwrap(), &data).unwrap()
                    - exact_nll(&m.unpack(&tm).unwrap(), &data).unwrap())
                    / (2.0 * h);
                assert!(
                    (fd - g[p]).abs() <= 1e-4 * fd.abs().max(1e-2),
                    "param {p} ({}): fd {fd} analytic {}",
                    m.param_names()[p],
                    g[p]
                );
            }
        }
    }

    #[test]
    fn background_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = ChangeSurfaceModel::with_background(
            rks(&mut rng, 3, 1),
            Kernel::rbf(0.8, vec![0.05]),
            Kernel::rbf(1.2, vec![0.01]),
            0.1,
        )
        .unwrap();
        let data = random_data(&mut rng, 25, 1);
        let (_, g) = exact_nll_grad(&m, &data).unwrap();
        let theta = m.pack();
        for p in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[p] += h;
            let mut tm = theta.clone();
            tm[p] -= h;
            let fd = (exact_nll(&m.unpack(&tp).unwrap(), &data).unwrap()
                - exact_nll(&m.unpack(&tm).unwrap(), &data).unwrap())
                / (2.0 * h);
            assert!((fd - g[p]).abs() <= 1e-4 * fd.abs().max(1e-2), "param {p}");
        }
    }

    #[test]
    fn approx_upper_bounds_exact_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_model(&mut rng, 2);
        let grid = GridSpec::unit(2, 8).unwrap();
        let y: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(grid.points(), y).unwrap();
        let st = Structure::detect(&data, None).unwrap();
        assert!(matches!(st, Structure::Grid(_)));
        let exact = exact_nll(&m, &data).unwrap();
        let cg = CgOptions {
            tol: 1e-10,
            max_iter: 1000,
        };
        for method in [
            LogDetMethod::WeylExact,
            LogDetMethod::WeylMiddle,
            LogDetMethod::WeylGreedy { v: 80 },
            LogDetMethod::Fiedler,
        ] {
            let a = approx_nll(&m, &data, &st, method, cg).unwrap();
            assert!(a.cg_converged);
            assert!(a.value >= exact - 1e-6, "{method}: {} < {exact}", a.value);
        }
    }

    #[test]
    fn single_effective_term_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut m = random_model(&mut rng, 2);
        m.warps[0] = Warp::Linear(LinearWarp {
            intercept: 800.0,
            slope: vec![0.0, 0.0],
        });
        let grid = GridSpec::unit(2, 8).unwrap();
        let y: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(grid.points(), y).unwrap();
        let st = Structure::detect(&data, None).unwrap();
        let cg = CgOptions {
            tol: 1e-12,
            max_iter: 2000,
        };
        let a = approx_nll(&m, &data, &st, LogDetMethod::WeylExact, cg).unwrap();
        let e = exact_nll(&m, &data).unwrap();
        assert!((a.value - e).abs() < 1e-6, "{} vs {e}", a.value);
    }

    #[test]
    fn interp_on_nodes_matches_grid_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_model(&mut rng, 2);
        let grid = GridSpec::unit(2, 6).unwrap();
        let y: Vec<f64> = (0..36).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(grid.points(), y).unwrap();
        let cg = CgOptions {
            tol: 1e-12,
            max_iter: 1000,
        };
        let on_grid = approx_nll(
            &m,
            &data,
            &Structure::detect(&data, None).unwrap(),
            LogDetMethod::WeylMiddle,
            cg,
        )
        .unwrap();
        let interp = approx_nll(
            &m,
            &data,
            &Structure::interp(&data, grid).unwrap(),
            LogDetMethod::WeylMiddle,
            cg,
        )
        .unwrap();
        assert!((on_grid.value - interp.value).abs() < 1e-8);
    }

    #[test]
    fn predict_interpolates_training_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = random_model(&mut rng, 1);
        let data = random_data(&mut rng, 20, 1);
        let p = predict(&m, &data, data.inputs()).unwrap();
        assert_eq!(p.mean.len(), 20);
        for i in 0..20 {
            assert!(p.var[i] >= m.noise);
            assert!(p.latent_var[i] >= 0.0);
        }
    }

    #[test]
    fn method_parsing_round_trips() {
        for m in [
            LogDetMethod::Exact,
            LogDetMethod::Fiedler,
            LogDetMethod::WeylExact,
            LogDetMethod::WeylMiddle,
            LogDetMethod::WeylGreedy { v: 80 },
        ] {
            assert_eq!(m.to_string().parse::<LogDetMethod>().unwrap(), m);
        }
        assert!("weyl-greedy:0".parse::<LogDetMethod>().is_err());
        assert!("cholesky".parse::<LogDetMethod>().is_err());
    }

    struct Quadratic;

    impl Objective for Quadratic {
        fn value(&mut self, x: &[f64]) -> f64 {
            (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2)
        }

        fn value_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.value(x), vec![2.0 * (x[0] - 1.0), 20.0 * (x[1] + 2.0)]))
        }
    }

    #[test]
    fn nlcg_minimizes_quadratic() {
        let r = minimize(&mut Quadratic, &[5.0, 5.0], 200, 0.0).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] + 2.0).abs() < 1e-4);
        assert!(r.trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_iterations_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_model(&mut rng, 1);
        let data = random_data(&mut rng, 15, 1);
        let cfg = FitConfig {
            restarts: 1,
            max_iter: 0,
            ..FitConfig::default()
        };
        let r = fit(&m, &data, &cfg).unwrap();
        let before = exact_nll(&m, &data).unwrap();
        assert!((r.best_nll - before).abs() <= 1e-12 * before.abs());
        for (a, b) in r.model.pack().iter().zip(m.pack()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn fit_trace_is_monotone_and_best_is_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_model(&mut rng, 1);
        let data = random_data(&mut rng, 25, 1);
        let cfg = FitConfig {
            restarts: 2,
            max_iter: 15,
            ..FitConfig::default()
        };
        let r = fit(&m, &data, &cfg).unwrap();
        for t in &r.traces {
            assert!(t.windows(2).all(|w| w[1] <= w[0]));
        }
        let min = r.restart_nlls.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_nll, min);
        assert!(r.best_nll <= exact_nll(&m, &data).unwrap());
    }

    #[test]
    fn bound_path_fit_runs_with_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = random_model(&mut rng, 2);
        let grid = GridSpec::unit(2, 6).unwrap();
        let y: Vec<f64> = (0..36).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(grid.points(), y).unwrap();
        let cfg = FitConfig {
            restarts: 1,
            max_iter: 3,
            ..FitConfig::bound(LogDetMethod::WeylMiddle)
        };
        let r = fit(&m, &data, &cfg).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.logdet, LogDetMethod::WeylMiddle);
    }

    #[test]
    fn invalid_fit_config_is_rejected() {
        let bad = FitConfig {
            restarts: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            logdet: LogDetMethod::WeylMiddle,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
