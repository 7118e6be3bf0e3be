// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hyperparameter initialization: an RKS warp found through a simplified
//! model with RBF regimes, then spectral mixture kernels read off the
//! empirical spectrum of each regime's dominant region.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::{mean_sd, Dataset};
use crate::error::{GpcsError, Result};
use crate::inference::{exact_nll, minimize, ExactObjective};
use crate::kernels::{Kernel, RbfParams, Sm1d, SmProductParams};
use crate::surface::{ChangeSurfaceModel, RksWarp, Warp};

/// Standard mixture or background-plus-switched-regime form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelForm {
    #[default]
    Standard,
    Background,
}

/// Kernel family of the initialized model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Per-dimension products of spectral mixtures.
    #[default]
    SpectralMixture,
    /// The RBF kernels of the simplified model.
    Rbf,
}

/// Initialization settings. Optional prior scales default to values read
/// from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Warp draws.
    pub m1: usize,
    /// RBF hyperparameter draws per warp draw.
    pub m2: usize,
    /// Number of RKS features in the warp.
    pub features: usize,
    /// Prior length-scales `l_d` of the warp frequencies
    /// (default `range(x_d)/2`).
    pub lengthscales: Option<Vec<f64>>,
    /// Warp amplitude scale (default `std(y)`).
    pub sigma0: Option<f64>,
    /// Initial noise standard deviation (default `mean(|y|)/10`).
    pub noise_sd: Option<f64>,
    /// Optimizer iterations for each candidate.
    pub partial_iter: usize,
    /// Optimizer iterations for the selected candidate.
    pub final_iter: usize,
    /// Spectral mixture components per dimension.
    pub q: usize,
    pub spectrum_samples: usize,
    /// Cap on the points used by the warp search.
    pub subsample: Option<usize>,
    pub form: ModelForm,
    pub family: KernelFamily,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            m1: 100,
            m2: 20,
            features: 10,
            lengthscales: None,
            sigma0: None,
            noise_sd: None,
            partial_iter: 20,
            final_iter: 200,
            q: 3,
            spectrum_samples: 512,
            subsample: Some(400),
            form: ModelForm::Standard,
            family: KernelFamily::SpectralMixture,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(GpcsError::InvalidParameter("m1 and m2 must be >= 1".into()));
        }
        if self.features == 0 || self.q == 0 || self.spectrum_samples == 0 {
            return Err(GpcsError::InvalidParameter(
                "features, q and spectrum_samples must be >= 1".into(),
            ));
        }
        if let Some(l) = &self.lengthscales {
            if l.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(GpcsError::InvalidParameter(
                    "lengthscales must be positive".into(),
                ));
            }
        }
        for (name, v) in [("sigma0", self.sigma0), ("noise_sd", self.noise_sd)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(GpcsError::InvalidParameter(format!(
                        "{name} must be positive"
                    )));
                }
            }
        }
        if self.subsample == Some(0) {
            return Err(GpcsError::InvalidParameter("subsample must be >= 1".into()));
        }
        Ok(())
    }
}

/// Data-derived prior scales.
#[derive(Clone, Debug, PartialEq)]
pub struct Priors {
    pub lengthscales: Vec<f64>,
    pub sigma0: f64,
    pub noise_sd: f64,
    pub ranges: Vec<f64>,
    pub y_var: f64,
}

impl Priors {
    pub fn from_data(data: &Dataset, config: &InitConfig) -> Result<Self> {
        let ranges: Vec<f64> = data
            .inputs()
            .bounds()
            .iter()
            .map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 })
            .collect();
        let lengthscales = match &config.lengthscales {
            Some(l) if l.len() == data.dim() => l.clone(),
            Some(l) => {
                return Err(GpcsError::Dimension(format!(
                    "{} lengthscales for {}-dimensional data",
                    l.len(),
                    data.dim()
                )))
            }
            None => ranges.iter().map(|r| r / 2.0).collect(),
        };
        let (_, sd) = mean_sd(data.responses());
        let sd = if sd > 0.0 { sd } else { 1.0 };
        let mean_abs = data.responses().iter().map(|v| v.abs()).sum::<f64>() / data.len() as f64;
        let noise_sd =
            config
                .noise_sd
                .unwrap_or(if mean_abs > 0.0 { mean_abs / 10.0 } else { 0.1 });
        Ok(Self {
            lengthscales,
            sigma0: config.sigma0.unwrap_or(sd),
            noise_sd,
            ranges,
            y_var: sd * sd,
        })
    }
}

/// RKS warp draw: `a ~ N(0, σ₀/m)`, `ω ~ N(0, Λ⁻¹/4π²)`, `b ~ U(0, 2π)`.
pub fn draw_rks_warp(priors: &Priors, m: usize, rng: &mut impl Rng) -> Result<Warp> {
    let amp = Normal::new(0.0, (priors.sigma0 / m as f64).sqrt())
        .map_err(|e| GpcsError::InvalidParameter(e.to_string()))?;
    let freq: Vec<Normal<f64>> = priors
        .lengthscales
        .iter()
        .map(|l| {
            Normal::new(0.0, 1.0 / (2.0 * PI * l))
                .map_err(|e| GpcsError::InvalidParameter(e.to_string()))
        })
        .collect::<Result<_>>()?;
    Ok(Warp::Rks(RksWarp {
        amplitudes: (0..m).map(|_| amp.sample(rng)).collect(),
        frequencies: (0..m)
            .map(|_| freq.iter().map(|f| f.sample(rng)).collect())
            .collect(),
        phases: (0..m).map(|_| rng.random_range(0.0..2.0 * PI)).collect(),
    }))
}

/// RBF draw: `s² = var(y)·e^u`, `u ~ U(ln 0.1, 0)`; `l_d = range_d·e^v`,
/// `v ~ U(ln 0.02, ln 0.5)`.
pub fn draw_rbf(priors: &Priors, rng: &mut impl Rng) -> Kernel {
    let s2 = priors.y_var * rng.random_range(0.1f64.ln()..0.0).exp();
    let ls: Vec<f64> = priors
        .ranges
        .iter()
        .map(|r| r * rng.random_range(0.02f64.ln()..0.5f64.ln()).exp())
        .collect();
    Kernel::Rbf(RbfParams::from_lengthscales(s2, &ls))
}

fn assemble(
    form: ModelForm,
    warp: Warp,
    kernels: Vec<Kernel>,
    noise: f64,
) -> Result<ChangeSurfaceModel> {
    let mut k = kernels.into_iter();
    let (a, b) = (k.next().unwrap(), k.next().unwrap());
    match form {
        ModelForm::Standard => ChangeSurfaceModel::two_regime(warp, a, b, noise),
        ModelForm::Background => ChangeSurfaceModel::with_background(warp, a, b, noise),
    }
}

fn subsample(data: &Dataset, cap: Option<usize>, rng: &mut impl Rng) -> Result<Dataset> {
    match cap {
        Some(c) if c < data.len() => {
            let mut idx = sample_indices(rng, data.len(), c).into_vec();
            idx.sort_unstable();
            data.select(&idx)
        }
        _ => Ok(data.clone()),
    }
}

/// Outcome of the warp search.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfInit {
    /// Converged simplified model (RBF regimes).
    pub model: ChangeSurfaceModel,
    pub nll: f64,
    /// Negative log likelihood of each candidate after partial optimization.
    pub candidate_nlls: Vec<f64>,
    pub best_candidate: usize,
}

fn optimize(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    iters: usize,
) -> Result<(ChangeSurfaceModel, f64)> {
    let mut obj = ExactObjective::new(model, data);
    let res = minimize(&mut obj, &model.pack(), iters, 1e-9)?;
    if !res.value.is_finite() {
        return Ok((model.clone(), f64::NAN));
    }
    Ok((model.unpack(&res.x)?, res.value))
}

/// Warp search with RBF regimes: `m1` warp draws, the best of `m2` kernel
/// draws for each, a short joint optimization per candidate, then the best
/// candidate optimized to convergence.
pub fn init_warp_rbf(data: &Dataset, config: &InitConfig, seed: u64) -> Result<RbfInit> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = subsample(data, config.subsample, &mut rng)?;
    let priors = Priors::from_data(&data, config)?;
    let noise = priors.noise_sd * priors.noise_sd;

    let mut candidates: Vec<(ChangeSurfaceModel, f64)> = Vec::with_capacity(config.m1);
    for _ in 0..config.m1 {
        let warp = draw_rks_warp(&priors, config.features, &mut rng)?;
        let mut best: Option<(ChangeSurfaceModel, f64)> = None;
        for _ in 0..config.m2 {
            let kernels = vec![draw_rbf(&priors, &mut rng), draw_rbf(&priors, &mut rng)];
            let model = assemble(config.form, warp.clone(), kernels, noise)?;
            let nll = exact_nll(&model, &data).unwrap_or(f64::NAN);
            if nll.is_finite() && best.as_ref().is_none_or(|b| nll < b.1) {
                best = Some((model, nll));
            }
        }
        let Some((model, nll0)) = best else {
            candidates.push((
                assemble(
                    config.form,
                    warp,
                    vec![draw_rbf(&priors, &mut rng), draw_rbf(&priors, &mut rng)],
                    noise,
                )?,
                f64::NAN,
            ));
            continue;
        };
        let (model, nll) = optimize(&model, &data, config.partial_iter)?;
        candidates.push((model, if nll.is_finite() { nll } else { nll0 }));
    }
    let best_candidate = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.1.is_finite())
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .ok_or(GpcsError::Diverged {
            traces: vec![candidates.iter().map(|c| c.1).collect()],
        })?;
    let (model, nll) = optimize(&candidates[best_candidate].0, &data, config.final_iter)?;
    let (model, nll) = if nll.is_finite() {
        (model, nll)
    } else {
        candidates[best_candidate].clone()
    };
    Ok(RbfInit {
        model,
        nll,
        candidate_nlls: candidates.iter().map(|c| c.1).collect(),
        best_candidate,
    })
}

/// Frequency samples drawn from an empirical spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSamples {
    pub samples: Vec<f64>,
    /// Frequency resolution of the underlying periodograms.
    pub bin_width: f64,
    /// Highest frequency represented.
    pub nyquist: f64,
    /// True when the dominant region was too small and all points were used.
    pub fallback: bool,
}

const MIN_SERIES: usize = 8;

/// `(frequency, power)` pairs of the periodogram of `y` at spacing `dx`,
/// from DC up to Nyquist.
pub fn periodogram(y: &[f64], dx: f64) -> Vec<(f64, f64)> {
    let n = y.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (0..=n / 2)
        .map(|k| (k as f64 / (n as f64 * dx), buf[k].norm_sqr() / n as f64))
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A 1-D series ordered by `x_d` with its median spacing; tied coordinates
/// are averaged.
fn ordered_series(mut pts: Vec<(f64, f64)>, tol: f64) -> Option<(Vec<f64>, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<(f64, usize)> = Vec::new();
    for (x, y) in pts {
        match xs.last() {
            Some(&last) if (x - last).abs() <= tol => {
                let e = ys.last_mut().unwrap();
                e.0 += y;
                e.1 += 1;
            }
            _ => {
                xs.push(x);
                ys.push((y, 1));
            }
        }
    }
    if xs.len() < MIN_SERIES {
        return None;
    }
    let mut gaps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let dx = median(&mut gaps);
    if !(dx > 0.0) {
        return None;
    }
    Some((ys.iter().map(|(s, c)| s / *c as f64).collect(), dx))
}

/// Samples frequencies along dimension `d` in proportion to the empirical
/// spectrum of the points where `weights[i]` exceeds one half.
///
/// Points sharing their other coordinates form lines along `d`; each line
/// with at least eight points contributes its periodogram. Without such
/// lines all selected points form one series ordered by `x_d`.
pub fn spectrum_samples(
    data: &Dataset,
    weights: &[f64],
    d: usize,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<SpectrumSamples> {
    if weights.len() != data.len() {
        return Err(GpcsError::Dimension(
            "one weight per point is needed".into(),
        ));
    }
    if d >= data.dim() {
        return Err(GpcsError::Dimension(format!("no dimension {d}")));
    }
    let x = data.inputs();
    let y = data.responses();
    let dominant: Vec<usize> = (0..data.len()).filter(|&i| weights[i] > 0.5).collect();
    let bounds = x.bounds();
    let tols: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| 1e-9 * (hi - lo).max(1.0))
        .collect();
    let collect_series = |idx: &[usize]| {
        let mut lines: BTreeMap<Vec<i64>, Vec<(f64, f64)>> = BTreeMap::new();
        for &i in idx {
            let key: Vec<i64> = (0..data.dim())
                .filter(|&j| j != d)
                .map(|j| ((x.row(i)[j] - bounds[j].0) / tols[j]).round() as i64)
                .collect();
            lines.entry(key).or_default().push((x.row(i)[d], y[i]));
        }
        let mut series: Vec<(Vec<f64>, f64)> = lines
            .into_values()
            .filter_map(|pts| ordered_series(pts, tols[d]))
            .collect();
        if series.is_empty() {
            let pts = idx.iter().map(|&i| (x.row(i)[d], y[i])).collect();
            series.extend(ordered_series(pts, tols[d]));
        }
        series
    };
    let mut series = if dominant.len() >= MIN_SERIES {
        collect_series(&dominant)
    } else {
        Vec::new()
    };
    let fallback = series.is_empty();
    if fallback {
        log::warn!(
            "dominant region of {} points gives no usable series; using all data",
            dominant.len()
        );
        let all: Vec<usize> = (0..data.len()).collect();
        series = collect_series(&all);
    }
    if series.is_empty() {
        return Err(GpcsError::InvalidParameter(format!(
            "fewer than {MIN_SERIES} distinct coordinates along dimension {d}"
        )));
    }

    let mut spectrum: Vec<(f64, f64)> = Vec::new();
    let mut widths = Vec::new();
    let mut nyq: f64 = 0.0;
    for (s, dx) in &series {
        widths.push(1.0 / (s.len() as f64 * dx));
        nyq = nyq.max(0.5 / dx);
        spectrum.extend(periodogram(s, *dx));
    }
    let bin_width = median(&mut widths);
    let total: f64 = spectrum.iter().map(|p| p.1).sum();
    let samples = if total > 0.0 {
        let dist = WeightedIndex::new(spectrum.iter().map(|p| p.1))
            .map_err(|e| GpcsError::InvalidParameter(e.to_string()))?;
        (0..n_samples)
            .map(|_| spectrum[dist.sample(rng)].0)
            .collect()
    } else {
        vec![0.0; n_samples]
    };
    Ok(SpectrumSamples {
        samples,
        bin_width,
        nyquist: nyq,
        fallback,
    })
}

/// Parameters of a 1-D Gaussian mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GmmParams {
    pub fn q(&self) -> usize {
        self.weights.len()
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples
            .iter()
            .map(|&x| {
                let terms: Vec<f64> = (0..self.q()).map(|q| self.log_component(q, x)).collect();
                log_sum_exp(&terms)
            })
            .sum()
    }

    fn log_component(&self, q: usize, x: f64) -> f64 {
        let v = self.variances[q];
        self.weights[q].ln() - 0.5 * (2.0 * PI * v).ln() - 0.5 * (x - self.means[q]).powi(2) / v
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Outcome of [`gmm_fit_1d`].
#[derive(Clone, Debug, PartialEq)]
pub struct GmmFit {
    pub params: GmmParams,
    pub log_likelihood: f64,
    /// Log likelihood after each EM iteration of the best restart.
    pub trace: Vec<f64>,
    /// True when `q` was reduced to the number of distinct samples.
    pub reduced: bool,
}

const EM_RESTARTS: usize = 10;
const EM_ITERS: usize = 200;
const EM_TOL: f64 = 1e-8;

/// Maximum-likelihood 1-D Gaussian mixture by EM with k-means++ seeding,
/// keeping the best of ten restarts. Variances are floored at
/// `1e-6 · var(samples)`.
pub fn gmm_fit_1d(samples: &[f64], q: usize, seed: u64) -> Result<GmmFit> {
    gmm_fit_1d_floored(samples, q, seed, 0.0)
}

/// [`gmm_fit_1d`] with an additional absolute variance floor.
pub fn gmm_fit_1d_floored(
    samples: &[f64],
    q: usize,
    seed: u64,
    min_variance: f64,
) -> Result<GmmFit> {
    if samples.is_empty() {
        return Err(GpcsError::Empty);
    }
    if q == 0 {
        return Err(GpcsError::InvalidParameter("q must be >= 1".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(GpcsError::InvalidParameter("samples must be finite".into()));
    }
    let mut distinct = samples.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let reduced = distinct.len() < q;
    let q = q.min(distinct.len());
    if reduced {
        log::warn!("reducing mixture to {q} components");
    }
    let (mean, sd) = mean_sd(samples);
    let var = sd * sd;
    let floor = (1e-6 * var).max(min_variance).max(f64::MIN_POSITIVE.sqrt());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<GmmFit> = None;
    let restarts = if q == 1 { 1 } else { EM_RESTARTS };
    for _ in 0..restarts {
        let centers = kmeans_pp(&distinct, q, &mut rng);
        let mut p = GmmParams {
            weights: vec![1.0 / q as f64; q],
            means: if q == 1 { vec![mean] } else { centers },
            variances: vec![var.max(floor); q],
        };
        let (ll, trace) = em(samples, &mut p, floor);
        if best.as_ref().is_none_or(|b| ll > b.log_likelihood) {
            best = Some(GmmFit {
                params: p,
                log_likelihood: ll,
                trace,
                reduced,
            });
        }
    }
    Ok(best.unwrap())
}

fn kmeans_pp(distinct: &[f64], q: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut centers = vec![distinct[rng.random_range(0..distinct.len())]];
    while centers.len() < q {
        let d2: Vec<f64> = distinct
            .iter()
            .map(|x| {
                centers
                    .iter()
                    .map(|c| (x - c).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => distinct[w.sample(rng)],
            Err(_) => distinct[rng.random_range(0..distinct.len())],
        };
        centers.push(next);
    }
    centers
}

fn em(samples: &[f64], p: &mut GmmParams, floor: f64) -> (f64, Vec<f64>) {
    let n = samples.len();
    let q = p.q();
    let mut resp = vec![0.0; n * q];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..EM_ITERS {
        let mut ll = 0.0;
        let mut terms = vec![0.0; q];
        for (i, &x) in samples.iter().enumerate() {
            for (c, t) in terms.iter_mut().enumerate() {
                *t = p.log_component(c, x);
            }
            let lse = log_sum_exp(&terms);
            ll += lse;
            for c in 0..q {
                resp[i * q + c] = (terms[c] - lse).exp();
            }
        }
        trace.push(ll);
        if (ll - prev).abs() < EM_TOL {
            prev = ll;
            break;
        }
        prev = ll;
        for c in 0..q {
            let nk: f64 = (0..n).map(|i| resp[i * q + c]).sum();
            if nk <= 0.0 {
                continue;
            }
            let mu = (0..n).map(|i| resp[i * q + c] * samples[i]).sum::<f64>() / nk;
            let v = (0..n)
                .map(|i| resp[i * q + c] * (samples[i] - mu).powi(2))
                .sum::<f64>()
                / nk;
            p.weights[c] = nk / n as f64;
            p.means[c] = mu;
            p.variances[c] = v.max(floor);
        }
        let s: f64 = p.weights.iter().sum();
        for w in &mut p.weights {
            *w /= s;
        }
    }
    (p.log_likelihood(samples).max(prev), trace)
}

/// Spectral mixture initialization of every regime from the dominant
/// regions of `weights` (`weights[i][x]`, one row per regime).
///
/// For each dimension, a `q`-component mixture fitted to spectrum samples
/// gives means and variances; component weights are
/// `std(y on the region) · φ_q`.
pub fn init_sm(
    data: &Dataset,
    weights: &[Vec<f64>],
    q: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Kernel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(weights.len());
    for w in weights {
        let sel: Vec<f64> = data
            .responses()
            .iter()
            .zip(w)
            .filter(|(_, s)| **s > 0.5)
            .map(|(y, _)| *y)
            .collect();
        let ys = if sel.len() >= MIN_SERIES {
            sel
        } else {
            data.responses().to_vec()
        };
        let (_, sd) = mean_sd(&ys);
        let sd = if sd > 0.0 { sd } else { 1e-3 };
        let mut dims = Vec::with_capacity(data.dim());
        for d in 0..data.dim() {
            let spec = spectrum_samples(data, w, d, n_samples, &mut rng)?;
            let floor = (0.5 * spec.bin_width).powi(2);
            let gmm = gmm_fit_1d_floored(&spec.samples, q, rng.random(), floor)?;
            let p = gmm.params;
            dims.push(Sm1d {
                weights: p.weights.iter().map(|phi| (sd * phi).max(1e-12)).collect(),
                means: p.means.iter().map(|m| m.abs()).collect(),
                variances: p.variances.clone(),
            });
        }
        out.push(Kernel::SmProduct(SmProductParams { dims }));
    }
    Ok(out)
}

/// Full initialization: the warp search, then spectral mixture kernels
/// built from the resulting regime weights (unless the RBF family is
/// requested). The noise comes from the warp search.
pub fn init_model(data: &Dataset, config: &InitConfig, seed: u64) -> Result<ChangeSurfaceModel> {
    let rbf = init_warp_rbf(data, config, seed)?;
    match config.family {
        KernelFamily::Rbf => Ok(rbf.model),
        KernelFamily::SpectralMixture => {
            let weights = rbf.model.weights(data.inputs())?;
            let regimes: Vec<Vec<f64>> = match config.form {
                ModelForm::Standard => weights,
                ModelForm::Background => {
                    let all = vec![1.0; data.len()];
                    vec![all, weights[0].clone()]
                }
            };
            let kernels = init_sm(
                data,
                &regimes,
                config.q,
                config.spectrum_samples,
                seed ^ 0x5eed,
            )?;
            assemble(
                config.form,
                rbf.model.warps[0].clone(),
                kernels,
                rbf.model.noise,
            )
        }
    }
}

/// Baseline without any data-driven search: one prior warp draw and
/// spectral mixture kernels with `φ = 1/q`, means uniform on
/// `[0, Nyquist]` and spectral standard deviations uniform on
/// `[0.01, 0.5]·Nyquist`, where Nyquist is taken at the median spacing.
pub fn random_init(data: &Dataset, config: &InitConfig, seed: u64) -> Result<ChangeSurfaceModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let priors = Priors::from_data(data, config)?;
    let warp = draw_rks_warp(&priors, config.features, &mut rng)?;
    let x = data.inputs();
    let nyq: Vec<f64> = (0..data.dim())
        .map(|d| {
            let mut c = x.column(d);
            c.sort_by(f64::total_cmp);
            c.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * priors.ranges[d]);
            let mut gaps: Vec<f64> = c.windows(2).map(|w| w[1] - w[0]).collect();
            if gaps.is_empty() {
                1.0
            } else {
                0.5 / median(&mut gaps)
            }
        })
        .collect();
    let sd = priors.y_var.sqrt();
    let q = config.q;
    let kernel = |rng: &mut ChaCha8Rng| {
        Kernel::SmProduct(SmProductParams {
            dims: nyq
                .iter()
                .map(|&f| Sm1d {
                    weights: vec![sd / q as f64; q],
                    means: (0..q).map(|_| rng.random_range(0.0..f)).collect(),
                    variances: (0..q)
                        .map(|_| (f * rng.random_range(0.01..0.5)).powi(2))
                        .collect(),
                })
                .collect(),
        })
    };
    let kernels = match config.family {
        KernelFamily::SpectralMixture => vec![kernel(&mut rng), kernel(&mut rng)],
        KernelFamily::Rbf => vec![draw_rbf(&priors, &mut rng), draw_rbf(&priors, &mut rng)],
    };
    assemble(
        config.form,
        warp,
        kernels,
        priors.noise_sd * priors.noise_sd,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PointSet;
    use rand_distr::StandardNormal;

    fn series(y: Vec<f64>) -> Dataset {
        let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
        Dataset::new(PointSet::from_column(&x), y).unwrap()
    }

    fn histogram(samples: &[f64], edges: &[f64]) -> Vec<usize> {
        let mut h = vec![0; edges.len() - 1];
        for &s in samples {
            for b in 0..h.len() {
                if s >= edges[b] && (s < edges[b + 1] || (b + 1 == h.len() && s <= edges[b + 1])) {
                    h[b] += 1;
                    break;
                }
            }
        }
        h
    }

    #[test]
    fn sinusoid_spectrum_peaks_at_its_frequency() {
        let data = series(
            (0..100)
                .map(|i| (2.0 * PI * 0.2 * i as f64).cos())
                .collect(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = spectrum_samples(&data, &vec![1.0; 100], 0, 512, &mut rng).unwrap();
        assert!((s.bin_width - 0.01).abs() < 1e-12);
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for v in &s.samples {
            *counts.entry((v / s.bin_width).round() as i64).or_default() += 1;
        }
        let (peak, _) = counts.iter().max_by_key(|(_, c)| **c).unwrap();
        assert!((peak - 20).abs() <= 1);
    }

    #[test]
    fn constant_spectrum_is_dc_only() {
        let data = series(vec![2.5; 64]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = spectrum_samples(&data, &vec![1.0; 64], 0, 256, &mut rng).unwrap();
        assert!(s.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut rng)).collect();
        let data = series(y);
        let s = spectrum_samples(&data, &vec![1.0; 4096], 0, 512, &mut rng).unwrap();
        let edges: Vec<f64> = (0..=8).map(|b| b as f64 * 0.5 / 8.0).collect();
        let h = histogram(&s.samples, &edges);
        let expected = 512.0 / 8.0;
        let chi2: f64 = h
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 0.999 quantile of chi-square with 7 degrees of freedom
        assert!(chi2 < 24.32, "chi2 {chi2} for {h:?}");
    }

    #[test]
    fn small_region_falls_back_to_all_points() {
        let data = series((0..40).map(|i| (i as f64 * 0.3).sin()).collect());
        let mut w = vec![0.0; 40];
        w[0] = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = spectrum_samples(&data, &w, 0, 16, &mut rng).unwrap();
        assert!(s.fallback);
    }

    #[test]
    fn narrow_strip_falls_back_to_all_points() {
        let grid = crate::data::GridSpec::unit(2, 20).unwrap();
        let pts = grid.points();
        let y: Vec<f64> = pts.rows().map(|r| (9.0 * r[0]).sin() + r[1]).collect();
        let w: Vec<f64> = pts
            .rows()
            .map(|r| if r[0] < 0.12 { 1.0 } else { 0.0 })
            .collect();
        let data = Dataset::new(pts, y).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = spectrum_samples(&data, &w, 0, 16, &mut rng).unwrap();
        assert!(s.fallback);
        assert_eq!(s.samples.len(), 16);
    }

    #[test]
    fn grid_lines_share_one_frequency_axis() {
        let grid = crate::data::GridSpec::unit(2, 20).unwrap();
        let pts = grid.points();
        let y: Vec<f64> = pts.rows().map(|r| (2.0 * PI * 5.0 * r[1]).cos()).collect();
        let data = Dataset::new(pts, y).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = spectrum_samples(&data, &vec![1.0; 400], 1, 512, &mut rng).unwrap();
        let near = s
            .samples
            .iter()
            .filter(|f| (**f - 5.0 * 19.0 / 20.0).abs() < 1.5)
            .count();
        assert!(near > 400, "{near}");
    }

    #[test]
    fn single_gaussian_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s: Vec<f64> = (0..500)
            .map(|_| 3.0 + 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fit = gmm_fit_1d(&s, 1, 0).unwrap();
        let (m, sd) = mean_sd(&s);
        assert_eq!(fit.params.weights, vec![1.0]);
        assert!((fit.params.means[0] - m).abs() < 1e-6);
        assert!((fit.params.variances[0] - sd * sd).abs() < 1e-6);
    }

    #[test]
    fn separated_clusters_are_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s: Vec<f64> = (0..300)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5)
            .collect();
        s.extend((0..200).map(|_| 10.0 + rng.sample::<f64, _>(StandardNormal) * 0.5));
        let fit = gmm_fit_1d(&s, 2, 1).unwrap();
        let mut comps: Vec<(f64, f64)> = fit
            .params
            .means
            .iter()
            .copied()
            .zip(fit.params.weights.iter().copied())
            .collect();
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(comps[0].0.abs() < 0.1 && (comps[1].0 - 10.0).abs() < 0.1);
        assert!((comps[0].1 - 0.6).abs() < 0.05 && (comps[1].1 - 0.4).abs() < 0.05);
        assert!((fit.params.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn em_log_likelihood_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s: Vec<f64> = (0..400)
            .map(|_| rng.random_range(0.0..5.0f64).powi(2))
            .collect();
        let fit = gmm_fit_1d(&s, 3, 2).unwrap();
        assert!(fit
            .trace
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
    }

    #[test]
    fn too_few_distinct_samples_reduce_q() {
        let fit = gmm_fit_1d(&[1.0, 1.0, 2.0, 2.0], 3, 0).unwrap();
        assert!(fit.reduced);
        assert_eq!(fit.params.q(), 2);
    }

    #[test]
    fn warp_frequency_prior_has_the_right_spread() {
        let priors = Priors {
            lengthscales: vec![0.5, 0.1],
            sigma0: 1.0,
            noise_sd: 0.1,
            ranges: vec![1.0, 1.0],
            y_var: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sums = [0.0; 2];
        let n = 10_000;
        for _ in 0..n / 10 {
            let Warp::Rks(w) = draw_rks_warp(&priors, 10, &mut rng).unwrap() else {
                unreachable!()
            };
            for f in &w.frequencies {
                sums[0] += f[0] * f[0];
                sums[1] += f[1] * f[1];
            }
        }
        for (d, l) in [0.5f64, 0.1].iter().enumerate() {
            let target = (1.0 / (2.0 * PI * l)).powi(2);
            // n·s²/σ² is chi-square with n degrees of freedom
            let stat = sums[d] / target;
            let z = (stat - n as f64) / (2.0 * n as f64).sqrt();
            assert!(z.abs() < 3.29, "dimension {d}: z = {z}");
        }
    }

    fn sm_series(n: usize, seed: u64) -> Dataset {
        let k = Kernel::SmProduct(SmProductParams {
            dims: vec![Sm1d {
                weights: vec![1.0],
                means: vec![0.2],
                variances: vec![0.0004],
            }],
        });
        let grid = crate::data::GridSpec::new(vec![(0..n).map(|i| i as f64).collect()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = crate::synthetic::grid_gp_draw(&k, &grid, &mut rng).unwrap();
        Dataset::new(grid.points(), y).unwrap()
    }

    #[test]
    fn sm_init_recovers_a_spectral_peak() {
        let data = sm_series(200, 10);
        let ks = init_sm(&data, &[vec![1.0; 200]], 3, 512, 3).unwrap();
        let Kernel::SmProduct(p) = &ks[0] else {
            unreachable!()
        };
        assert!(
            p.dims[0].means.iter().any(|m| (m - 0.2).abs() < 0.05),
            "{:?}",
            p.dims[0]
        );
        let again = init_sm(&data, &[vec![1.0; 200]], 3, 512, 3).unwrap();
        assert_eq!(ks, again);
    }

    #[test]
    fn constant_regime_gets_dc_means() {
        let data = series(vec![1.0; 32]);
        let ks = init_sm(&data, &[vec![1.0; 32]], 2, 64, 0).unwrap();
        let Kernel::SmProduct(p) = &ks[0] else {
            unreachable!()
        };
        assert!(p.dims[0].means.iter().all(|m| m.abs() < 1e-12));
    }

    fn small_data(seed: u64) -> Dataset {
        let spec = crate::synthetic::SyntheticSpec {
            grid: vec![12, 12],
            ..Default::default()
        };
        let (d, _) = crate::synthetic::gen_gpcs_data(&spec, seed).unwrap();
        crate::data::standardize(&d).unwrap().0
    }

    #[test]
    fn single_draw_smoke_path() {
        let data = small_data(1);
        let cfg = InitConfig {
            m1: 1,
            m2: 1,
            partial_iter: 2,
            final_iter: 2,
            ..Default::default()
        };
        let r = init_warp_rbf(&data, &cfg, 0).unwrap();
        assert_eq!(r.candidate_nlls.len(), 1);
        assert!(r.nll <= r.candidate_nlls[0] + 1e-9);
    }

    #[test]
    fn best_candidate_is_the_argmin() {
        let data = small_data(2);
        let cfg = InitConfig {
            m1: 4,
            m2: 3,
            partial_iter: 3,
            final_iter: 0,
            ..Default::default()
        };
        let r = init_warp_rbf(&data, &cfg, 1).unwrap();
        let min = r
            .candidate_nlls
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.candidate_nlls[r.best_candidate], min);
        assert!(r.nll <= min + 1e-9);
    }

    #[test]
    fn init_pipeline_is_reproducible() {
        let data = small_data(3);
        let cfg = InitConfig {
            m1: 2,
            m2: 2,
            partial_iter: 2,
            final_iter: 3,
            q: 2,
            ..Default::default()
        };
        let a = init_model(&data, &cfg, 5).unwrap();
        let b = init_model(&data, &cfg, 5).unwrap();
        assert_eq!(a.hyper_vector(), b.hyper_vector());
        assert!(matches!(a.kernels[0], Kernel::SmProduct(_)));
        let bg = InitConfig {
            form: ModelForm::Background,
            ..cfg
        };
        let m = init_model(&data, &bg, 5).unwrap();
        assert!(m.is_background());
    }

    #[test]
    fn random_init_is_seeded() {
        let data = small_data(4);
        let cfg = InitConfig::default();
        assert_eq!(
            random_init(&data, &cfg, 1).unwrap(),
            random_init(&data, &cfg, 1).unwrap()
        );
        assert_ne!(
            random_init(&data, &cfg, 1).unwrap(),
            random_init(&data, &cfg, 2).unwrap()
        );
    }
}
