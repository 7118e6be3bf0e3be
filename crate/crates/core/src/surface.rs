// SPDX-License-Identifier: MIT OR Apache-2.0

//! Warping functions, softmax change surfaces, the composite covariance and
//! midpoint/width summaries.

use std::ops::Range;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::{GridSpec, PointSet, StandardizationParams};
use crate::error::{GpcsError, Result};
use crate::kernels::{grid_factors, HyperVector, Kernel};
use crate::kron::{interp_weights, InterpOperator, ScaledKronSum, ScaledTerm};

/// `w(x) = Σ_i a_i cos(ω_i·x + b_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RksWarp {
    pub amplitudes: Vec<f64>,
    /// `frequencies[i]` is `ω_i` (length `D`).
    pub frequencies: Vec<Vec<f64>>,
    pub phases: Vec<f64>,
}

/// `w(x) = β₀ + β₁·x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearWarp {
    pub intercept: f64,
    pub slope: Vec<f64>,
}

/// `w(x) = Σ_i β_i·x^i` with elementwise powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialWarp {
    /// `coefficients[i]` multiplies `x^i` (length `D`).
    pub coefficients: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Warp {
    Rks(RksWarp),
    Linear(LinearWarp),
    Polynomial(PolynomialWarp),
    /// Pinned to zero; carries no parameters.
    Zero,
}

impl Warp {
    pub fn dim(&self) -> Option<usize> {
        match self {
            Warp::Rks(w) => w.frequencies.first().map(Vec::len),
            Warp::Linear(w) => Some(w.slope.len()),
            Warp::Polynomial(w) => w.coefficients.first().map(Vec::len),
            Warp::Zero => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Warp::Rks(w) => {
                let m = w.amplitudes.len();
                let d = self.dim().unwrap_or(0);
                m >= 1
                    && d >= 1
                    && w.frequencies.len() == m
                    && w.phases.len() == m
                    && w.frequencies.iter().all(|f| f.len() == d && finite(f))
                    && finite(&w.amplitudes)
                    && finite(&w.phases)
            }
            Warp::Linear(w) => !w.slope.is_empty() && w.intercept.is_finite() && finite(&w.slope),
            Warp::Polynomial(w) => {
                let d = self.dim().unwrap_or(0);
                d >= 1 && w.coefficients.iter().all(|c| c.len() == d && finite(c))
            }
            Warp::Zero => true,
        };
        if ok {
            Ok(())
        } else {
            Err(GpcsError::InvalidParameter(
                "malformed or non-finite warp".into(),
            ))
        }
    }

    pub fn eval_point(&self, x: &[f64]) -> f64 {
        match self {
            Warp::Rks(w) => w
                .amplitudes
                .iter()
                .zip(&w.frequencies)
                .zip(&w.phases)
                .map(|((a, om), b)| a * (crate::dense::dot(om, x) + b).cos())
                .sum(),
            Warp::Linear(w) => w.intercept + crate::dense::dot(&w.slope, x),
            Warp::Polynomial(w) => w
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    c.iter()
                        .zip(x)
                        .map(|(b, v)| b * v.powi(i as i32))
                        .sum::<f64>()
                })
                .sum(),
            Warp::Zero => 0.0,
        }
    }

    pub fn eval(&self, x: &PointSet) -> Result<Vec<f64>> {
        if let Some(d) = self.dim() {
            if d != x.dim() {
                return Err(GpcsError::Dimension(format!(
                    "warp is {d}-dimensional, points are {}-dimensional",
                    x.dim()
                )));
            }
        }
        Ok(x.rows().map(|r| self.eval_point(r)).collect())
    }

    pub fn n_params(&self) -> usize {
        match self {
            Warp::Rks(w) => w.amplitudes.len() * (2 + self.dim().unwrap_or(0)),
            Warp::Linear(w) => 1 + w.slope.len(),
            Warp::Polynomial(w) => w.coefficients.iter().map(Vec::len).sum(),
            Warp::Zero => 0,
        }
    }

    /// `[a.., ω (row-major).., b..]` for RKS; raw values throughout.
    pub fn pack(&self) -> Vec<f64> {
        match self {
            Warp::Rks(w) => w
                .amplitudes
                .iter()
                .chain(w.frequencies.iter().flatten())
                .chain(&w.phases)
                .copied()
                .collect(),
            Warp::Linear(w) => std::iter::once(w.intercept)
                .chain(w.slope.iter().copied())
                .collect(),
            Warp::Polynomial(w) => w.coefficients.iter().flatten().copied().collect(),
            Warp::Zero => Vec::new(),
        }
    }

    pub fn unpack(&self, theta: &[f64]) -> Result<Warp> {
        if theta.len() != self.n_params() {
            return Err(GpcsError::Dimension(format!(
                "{} values for {} warp parameters",
                theta.len(),
                self.n_params()
            )));
        }
        Ok(match self {
            Warp::Rks(w) => {
                let m = w.amplitudes.len();
                let d = self.dim().unwrap_or(0);
                Warp::Rks(RksWarp {
                    amplitudes: theta[..m].to_vec(),
                    frequencies: theta[m..m + m * d].chunks(d).map(<[f64]>::to_vec).collect(),
                    phases: theta[m + m * d..].to_vec(),
                })
            }
            Warp::Linear(_) => Warp::Linear(LinearWarp {
                intercept: theta[0],
                slope: theta[1..].to_vec(),
            }),
            Warp::Polynomial(w) => {
                let d = self.dim().unwrap_or(0);
                Warp::Polynomial(PolynomialWarp {
                    coefficients: theta
                        .chunks(d)
                        .take(w.coefficients.len())
                        .map(<[f64]>::to_vec)
                        .collect(),
                })
            }
            Warp::Zero => Warp::Zero,
        })
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        match self {
            Warp::Rks(w) => {
                let m = w.amplitudes.len();
                let d = self.dim().unwrap_or(0);
                let mut names: Vec<String> =
                    (0..m).map(|i| format!("{prefix}.amplitude[{i}]")).collect();
                for i in 0..m {
                    names.extend((0..d).map(|j| format!("{prefix}.frequency[{i}][{j}]")));
                }
                names.extend((0..m).map(|i| format!("{prefix}.phase[{i}]")));
                names
            }
            Warp::Linear(w) => std::iter::once(format!("{prefix}.intercept"))
                .chain((0..w.slope.len()).map(|d| format!("{prefix}.slope[{d}]")))
                .collect(),
            Warp::Polynomial(w) => w
                .coefficients
                .iter()
                .enumerate()
                .flat_map(|(i, c)| {
                    (0..c.len()).map(move |d| format!("{prefix}.coefficient[{i}][{d}]"))
                })
                .collect(),
            Warp::Zero => Vec::new(),
        }
    }

    /// Writes `∂w(x)/∂θ_p` for every packed parameter into `out`.
    pub fn grad_point(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Warp::Rks(w) => {
                let m = w.amplitudes.len();
                let d = x.len();
                for i in 0..m {
                    let arg = crate::dense::dot(&w.frequencies[i], x) + w.phases[i];
                    let (s, c) = arg.sin_cos();
                    out[i] = c;
                    for j in 0..d {
                        out[m + i * d + j] = -w.amplitudes[i] * s * x[j];
                    }
                    out[m + m * d + i] = -w.amplitudes[i] * s;
                }
            }
            Warp::Linear(_) => {
                out[0] = 1.0;
                out[1..].copy_from_slice(x);
            }
            Warp::Polynomial(w) => {
                let d = x.len();
                for i in 0..w.coefficients.len() {
                    for j in 0..d {
                        out[i * d + j] = x[j].powi(i as i32);
                    }
                }
            }
            Warp::Zero => {}
        }
    }

    /// The warp `−w`.
    pub fn negated(&self) -> Warp {
        match self {
            Warp::Rks(w) => Warp::Rks(RksWarp {
                amplitudes: w.amplitudes.iter().map(|a| -a).collect(),
                ..w.clone()
            }),
            Warp::Linear(w) => Warp::Linear(LinearWarp {
                intercept: -w.intercept,
                slope: w.slope.iter().map(|b| -b).collect(),
            }),
            Warp::Polynomial(w) => Warp::Polynomial(PolynomialWarp {
                coefficients: w
                    .coefficients
                    .iter()
                    .map(|c| c.iter().map(|b| -b).collect())
                    .collect(),
            }),
            Warp::Zero => Warp::Zero,
        }
    }
}

/// Column-wise softmax of an `r × a` matrix of warp values.
pub fn softmax_weights(w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let r = w.len();
    let a = w.first().map_or(0, Vec::len);
    let mut s = vec![vec![0.0; a]; r];
    for j in 0..a {
        let max = (0..r).map(|i| w[i][j]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in 0..r {
            let e = (w[i][j] - max).exp();
            s[i][j] = e;
            total += e;
        }
        for row in s.iter_mut() {
            row[j] /= total;
        }
    }
    s
}

/// Standard logistic function.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// A GPCS model.
///
/// In the standard form `kernels[i]` belongs to regime `i` and
/// `y = Σ_i s_i f_i + ε`. In the background form `kernels` has `r − 1`
/// entries, `background` holds `k₀`, and `y = f₀ + Σ_{i<r} s_i f_i + ε`
/// with the last regime identically zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeSurfaceModel {
    pub warps: Vec<Warp>,
    pub kernels: Vec<Kernel>,
    /// Noise variance `σ_ε²`.
    pub noise: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Kernel>,
}

/// Offsets of each block inside the packed hyperparameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub warps: Vec<Range<usize>>,
    pub kernels: Vec<Range<usize>>,
    pub background: Option<Range<usize>>,
    pub noise: usize,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.noise + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One covariance summand: a kernel and the regime scaling it (`None` for
/// the unit-scaled background).
pub(crate) struct Component<'a> {
    pub kernel: &'a Kernel,
    pub regime: Option<usize>,
    pub params: Range<usize>,
}

impl ChangeSurfaceModel {
    /// Two regimes with the second warp pinned to zero.
    pub fn two_regime(warp: Warp, k1: Kernel, k2: Kernel, noise: f64) -> Result<Self> {
        let m = Self {
            warps: vec![warp, Warp::Zero],
            kernels: vec![k1, k2],
            noise,
            background: None,
        };
        m.validate()?;
        Ok(m)
    }

    /// `y = f₀ + s₁ f₁ + ε`.
    pub fn with_background(warp: Warp, k0: Kernel, k1: Kernel, noise: f64) -> Result<Self> {
        let m = Self {
            warps: vec![warp, Warp::Zero],
            kernels: vec![k1],
            noise,
            background: Some(k0),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn r(&self) -> usize {
        self.warps.len()
    }

    pub fn is_background(&self) -> bool {
        self.background.is_some()
    }

    pub fn dim(&self) -> usize {
        self.kernels.first().map_or(0, Kernel::dim)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.r();
        if r < 2 {
            return Err(GpcsError::InvalidParameter(
                "a change surface needs r >= 2 regimes".into(),
            ));
        }
        if self
            .warps
            .iter()
            .filter(|w| matches!(w, Warp::Zero))
            .count()
            > 1
        {
            return Err(GpcsError::InvalidParameter(
                "at most one warp may be pinned to zero".into(),
            ));
        }
        let expected = if self.is_background() { r - 1 } else { r };
        if self.kernels.len() != expected {
            return Err(GpcsError::InvalidParameter(format!(
                "{} kernels for {r} regimes (expected {expected})",
                self.kernels.len()
            )));
        }
        if self.is_background() && r != 2 {
            return Err(GpcsError::InvalidParameter(
                "background form supports r = 2 only".into(),
            ));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(GpcsError::InvalidParameter(
                "noise variance must be positive".into(),
            ));
        }
        let d = self.dim();
        for k in self.kernels.iter().chain(&self.background) {
            k.validate()?;
            if k.dim() != d {
                return Err(GpcsError::Dimension(
                    "kernels disagree on input dimension".into(),
                ));
            }
        }
        for w in &self.warps {
            w.validate()?;
            if let Some(wd) = w.dim() {
                if wd != d {
                    return Err(GpcsError::Dimension(
                        "warp and kernel dimensions differ".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        let mut off = 0;
        let mut take = |n: usize| {
            let r = off..off + n;
            off += n;
            r
        };
        let warps = self.warps.iter().map(|w| take(w.n_params())).collect();
        let kernels = self.kernels.iter().map(|k| take(k.n_params())).collect();
        let background = self.background.as_ref().map(|k| take(k.n_params()));
        let noise = take(1).start;
        ParamLayout {
            warps,
            kernels,
            background,
            noise,
        }
    }

    pub(crate) fn components(&self) -> Vec<Component<'_>> {
        let layout = self.layout();
        let mut out = Vec::new();
        if let (Some(k), Some(p)) = (&self.background, &layout.background) {
            out.push(Component {
                kernel: k,
                regime: None,
                params: p.clone(),
            });
        }
        for (i, k) in self.kernels.iter().enumerate() {
            out.push(Component {
                kernel: k,
                regime: Some(i),
                params: layout.kernels[i].clone(),
            });
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.layout().len()
    }

    /// Warps, then kernels, then the background kernel, then `ln σ_ε²`.
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for w in &self.warps {
            v.extend(w.pack());
        }
        for k in self.kernels.iter().chain(&self.background) {
            v.extend(k.pack());
        }
        v.push(self.noise.ln());
        v
    }

    pub fn unpack(&self, theta: &[f64]) -> Result<Self> {
        let layout = self.layout();
        if theta.len() != layout.len() {
            return Err(GpcsError::Dimension(format!(
                "{} values for {} model parameters",
                theta.len(),
                layout.len()
            )));
        }
        Ok(Self {
            warps: self
                .warps
                .iter()
                .zip(&layout.warps)
                .map(|(w, r)| w.unpack(&theta[r.clone()]))
                .collect::<Result<_>>()?,
            kernels: self
                .kernels
                .iter()
                .zip(&layout.kernels)
                .map(|(k, r)| k.unpack(&theta[r.clone()]))
                .collect::<Result<_>>()?,
            background: match (&self.background, &layout.background) {
                (Some(k), Some(r)) => Some(k.unpack(&theta[r.clone()])?),
                _ => None,
            },
            noise: theta[layout.noise].exp(),
        })
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, w) in self.warps.iter().enumerate() {
            names.extend(w.param_names(&format!("warp[{i}]")));
        }
        for (i, k) in self.kernels.iter().enumerate() {
            names.extend(k.param_names(&format!("kernel[{i}]")));
        }
        if let Some(k) = &self.background {
            names.extend(k.param_names("background"));
        }
        names.push("ln_noise_variance".into());
        names
    }

    pub fn hyper_vector(&self) -> HyperVector {
        HyperVector {
            names: self.param_names(),
            values: self.pack(),
        }
    }

    /// Raw warp values, `r × n`.
    pub fn warp_values(&self, x: &PointSet) -> Result<Vec<Vec<f64>>> {
        self.check_dim(x.dim())?;
        self.warps.iter().map(|w| w.eval(x)).collect()
    }

    /// Softmax weights `s_i(x)`, `r × n`.
    pub fn weights(&self, x: &PointSet) -> Result<Vec<Vec<f64>>> {
        Ok(softmax_weights(&self.warp_values(x)?))
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(GpcsError::Dimension(format!(
                "model is {}-dimensional, points are {d}-dimensional",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Sum of the signal variances of all components.
    pub fn signal_variance(&self) -> f64 {
        self.kernels
            .iter()
            .chain(&self.background)
            .map(Kernel::variance)
            .sum()
    }

    /// The same model with regimes 1 and 2 swapped and `w₁ → −w₁`, which
    /// leaves the covariance unchanged. Only defined for the standard
    /// two-regime form with the second warp pinned.
    pub fn flipped(&self) -> Option<Self> {
        if self.is_background() || self.r() != 2 || !matches!(self.warps[1], Warp::Zero) {
            return None;
        }
        Some(Self {
            warps: vec![self.warps[0].negated(), Warp::Zero],
            kernels: vec![self.kernels[1].clone(), self.kernels[0].clone()],
            noise: self.noise,
            background: None,
        })
    }

    /// Chooses the labeling whose `s₁` on `x` is closest to `reference`.
    pub fn oriented_to(&self, x: &PointSet, reference: &[f64]) -> Result<Self> {
        let Some(flip) = self.flipped() else {
            return Ok(self.clone());
        };
        let s = self.weights(x)?;
        let mse = |v: &[f64], flip: bool| -> f64 {
            v.iter()
                .zip(reference)
                .map(|(a, b)| {
                    let a = if flip { 1.0 - a } else { *a };
                    (a - b).powi(2)
                })
                .sum::<f64>()
        };
        Ok(if mse(&s[0], true) < mse(&s[0], false) {
            flip
        } else {
            self.clone()
        })
    }

    /// Chooses the labeling in which regime 1 dominates where coordinate
    /// `axis` is smallest among `x`.
    pub fn oriented_earliest_first(&self, x: &PointSet, axis: usize) -> Result<Self> {
        let Some(flip) = self.flipped() else {
            return Ok(self.clone());
        };
        if x.is_empty() {
            return Ok(self.clone());
        }
        let s = self.weights(x)?;
        let col = x.column(axis);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cut = lo + 0.1 * (hi - lo);
        let early: Vec<f64> = col
            .iter()
            .zip(&s[0])
            .filter(|(c, _)| **c <= cut)
            .map(|(_, v)| *v)
            .collect();
        let mean = early.iter().sum::<f64>() / early.len().max(1) as f64;
        Ok(if mean < 0.5 { flip } else { self.clone() })
    }
}

/// Composite covariance `Σ_i s_i(x) k_i(x, x') s_i(x')` (plus `k₀` in the
/// background form). Noise is not included.
pub fn gpcs_cov(model: &ChangeSurfaceModel, x: &PointSet, y: &PointSet) -> Result<Mat<f64>> {
    let sx = model.weights(x)?;
    let sy = model.weights(y)?;
    let mut k = Mat::<f64>::zeros(x.len(), y.len());
    for c in model.components() {
        let ki = c.kernel.eval(x, y)?;
        for i in 0..x.len() {
            for j in 0..y.len() {
                let scale = match c.regime {
                    Some(r) => sx[r][i] * sy[r][j],
                    None => 1.0,
                };
                k[(i, j)] += scale * ki[(i, j)];
            }
        }
    }
    Ok(k)
}

/// The composite covariance on a full grid as a scaled Kronecker sum.
pub fn gpcs_operator(model: &ChangeSurfaceModel, grid: &GridSpec) -> Result<ScaledKronSum> {
    let s = model.weights(&grid.points())?;
    ScaledKronSum::new(scaled_terms(model, grid, &s)?, model.noise)
}

/// The composite covariance at scattered points through interpolation onto
/// a latent grid: `Σ_i S_i W K_i Wᵀ S_i + σ_ε²I`.
pub fn gpcs_operator_interp(
    model: &ChangeSurfaceModel,
    x: &PointSet,
    grid: &GridSpec,
) -> Result<ScaledKronSum> {
    let w = interp_weights(grid, x)?;
    gpcs_operator_with(model, x, grid, w)
}

pub(crate) fn gpcs_operator_with(
    model: &ChangeSurfaceModel,
    x: &PointSet,
    grid: &GridSpec,
    w: InterpOperator,
) -> Result<ScaledKronSum> {
    let s = model.weights(x)?;
    ScaledKronSum::with_interp(scaled_terms(model, grid, &s)?, model.noise, w)
}

fn scaled_terms(
    model: &ChangeSurfaceModel,
    grid: &GridSpec,
    s: &[Vec<f64>],
) -> Result<Vec<ScaledTerm>> {
    let n = s[0].len();
    model
        .components()
        .into_iter()
        .map(|c| {
            let scale = match c.regime {
                Some(r) => s[r].clone(),
                None => vec![1.0; n],
            };
            Ok(ScaledTerm {
                left: scale.clone(),
                kron: grid_factors(c.kernel, grid)?,
                right: scale,
            })
        })
        .collect()
}

/// How to sweep `s₁` along one axis for [`change_summary`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
    /// Observed range along the axis; midpoints outside it are flagged.
    #[serde(default)]
    pub data_range: Option<(f64, f64)>,
}

/// Midpoint and transition width of `s₁` along the sweep axis at one
/// location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeSummary {
    /// Coordinates on the non-sweep axes, in axis order.
    pub location: Vec<f64>,
    pub midpoint: Option<f64>,
    pub width: Option<f64>,
    pub slope: Option<f64>,
    pub extrapolated: bool,
}

impl ChangeSummary {
    pub fn has_crossing(&self) -> bool {
        self.midpoint.is_some()
    }
}

/// `s₁` sampled along the sweep axis at one location.
///
/// Coordinates are in original units when `standardization` is given;
/// the model itself sees standardized inputs.
pub fn sweep_curve(
    model: &ChangeSurfaceModel,
    standardization: Option<&StandardizationParams>,
    location: &[f64],
    sweep: &SweepSpec,
) -> Result<Vec<(f64, f64)>> {
    let d = model.dim();
    if sweep.axis >= d || location.len() + 1 != d {
        return Err(GpcsError::Dimension(format!(
            "sweep axis {} with {} location coordinates for a {d}-d model",
            sweep.axis,
            location.len()
        )));
    }
    if sweep.resolution < 2 || !(sweep.hi > sweep.lo) {
        return Err(GpcsError::InvalidParameter(
            "sweep needs resolution >= 2 and hi > lo".into(),
        ));
    }
    let ts = crate::data::linspace(sweep.lo, sweep.hi, sweep.resolution);
    let mut data = Vec::with_capacity(ts.len() * d);
    for &t in &ts {
        let mut others = location.iter();
        for a in 0..d {
            let v = if a == sweep.axis {
                t
            } else {
                *others.next().unwrap()
            };
            data.push(match standardization {
                Some(p) => p.transform_coordinate(a, v),
                None => v,
            });
        }
    }
    let s = model.weights(&PointSet::new(d, data)?)?;
    Ok(ts.into_iter().zip(s[0].iter().copied()).collect())
}

/// First coordinate where the sampled curve crosses `level`, linearly
/// interpolated between samples.
pub fn first_crossing(curve: &[(f64, f64)], level: f64) -> Option<f64> {
    for w in curve.windows(2) {
        let (t0, a) = w[0];
        let (t1, b) = w[1];
        if a == level {
            return Some(t0);
        }
        if (a - level) * (b - level) < 0.0 {
            return Some(t0 + (level - a) / (b - a) * (t1 - t0));
        }
    }
    curve.last().filter(|&&(_, v)| v == level).map(|&(t, _)| t)
}

/// Summarizes a sampled `s₁` curve.
pub fn summarize_curve(
    location: Vec<f64>,
    curve: &[(f64, f64)],
    data_range: Option<(f64, f64)>,
) -> ChangeSummary {
    let midpoint = first_crossing(curve, 0.5);
    let width = match (first_crossing(curve, 0.25), first_crossing(curve, 0.75)) {
        (Some(a), Some(b)) if a != b => Some((b - a).abs()),
        _ => None,
    };
    let extrapolated = match (midpoint, data_range) {
        (Some(m), Some((lo, hi))) => m < lo || m > hi,
        _ => false,
    };
    ChangeSummary {
        location,
        midpoint,
        width,
        slope: width.map(|w| 0.5 / w),
        extrapolated,
    }
}

/// Midpoint, width and slope of the change along `sweep.axis` at each
/// location. Locations without a crossing report `None`.
pub fn change_summary(
    model: &ChangeSurfaceModel,
    standardization: Option<&StandardizationParams>,
    locations: &[Vec<f64>],
    sweep: &SweepSpec,
) -> Result<Vec<ChangeSummary>> {
    if sweep.resolution < 100 {
        return Err(GpcsError::InvalidParameter(
            "sweep resolution must be at least 100".into(),
        ));
    }
    locations
        .iter()
        .map(|loc| {
            let curve = sweep_curve(model, standardization, loc, sweep)?;
            Ok(summarize_curve(loc.clone(), &curve, sweep.data_range))
        })
        .collect()
}
