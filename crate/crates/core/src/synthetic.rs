// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded synthetic change-surface data and the NMSE metric.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GridSpec};
use crate::dense::{Cholesky, JITTER_REL};
use crate::error::{GpcsError, Result};
use crate::kernels::{grid_factors, Kernel};
use crate::kron::kron_apply;
use crate::surface::{logistic, ChangeSurfaceModel, PolynomialWarp, Warp};

/// Whether responses mix two regimes or add a switched-on regime to a
/// background.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticMode {
    /// `y = s f₁ + (1 − s) f₂ + ε`.
    #[default]
    Standard,
    /// `y = f₀ + s f₁ + ε`.
    Background,
}

/// Generator settings. Points are the nodes of a uniform grid, listed in
/// row-major order (last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub grid: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
    pub degree: usize,
    /// Variance of each coefficient of the polynomial warp.
    pub beta_variance: f64,
    /// Regime kernels: `[k₁, k₂]`, or `[k₀, k₁]` in background mode.
    pub kernels: Vec<Kernel>,
    pub noise: f64,
    pub mode: SyntheticMode,
    /// Fixed polynomial coefficients instead of random draws.
    pub beta: Option<Vec<Vec<f64>>>,
    /// Replaces the surface by a constant.
    pub forced_surface: Option<f64>,
    /// Upper clamp on the log intensity of count data.
    pub latent_clamp: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            grid: vec![50, 50],
            bounds: vec![(0.0, 1.0); 2],
            degree: 3,
            beta_variance: 3.0,
            kernels: vec![
                Kernel::rbf(1.0, vec![0.05 * 0.05; 2]),
                Kernel::rbf(1.0, vec![0.2 * 0.2; 2]),
            ],
            noise: 1e-3,
            mode: SyntheticMode::Standard,
            beta: None,
            forced_surface: None,
            latent_clamp: 20.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.grid.len();
        if d == 0 || self.bounds.len() != d {
            return Err(GpcsError::Dimension(
                "grid sizes and bounds must have the same length".into(),
            ));
        }
        if self.grid.contains(&0) {
            return Err(GpcsError::InvalidParameter(
                "grid axes need at least one node".into(),
            ));
        }
        if !(self.beta_variance > 0.0) {
            return Err(GpcsError::InvalidParameter(
                "beta variance must be > 0".into(),
            ));
        }
        if !(self.noise >= 0.0) {
            return Err(GpcsError::InvalidParameter("noise must be >= 0".into()));
        }
        if self.kernels.len() != 2 {
            return Err(GpcsError::InvalidParameter(
                "exactly two kernels are needed".into(),
            ));
        }
        for k in &self.kernels {
            k.validate()?;
            if k.dim() != d {
                return Err(GpcsError::Dimension(
                    "kernel and grid dimensions differ".into(),
                ));
            }
        }
        if let Some(beta) = &self.beta {
            if beta.len() != self.degree + 1 || beta.iter().any(|b| b.len() != d) {
                return Err(GpcsError::Dimension(format!(
                    "beta must have {} rows of length {d}",
                    self.degree + 1
                )));
            }
        }
        if let Some(c) = self.forced_surface {
            if !(0.0..=1.0).contains(&c) {
                return Err(GpcsError::InvalidParameter(
                    "forced surface must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::uniform(&self.bounds, &self.grid)
    }
}

/// Everything drawn while generating a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub mode: SyntheticMode,
    /// Polynomial coefficients, `beta[i]` multiplying `x^i`.
    pub beta: Vec<Vec<f64>>,
    /// Change surface `s(x)`.
    pub surface: Vec<f64>,
    /// Latent draws: `[f₁, f₂]`, or `[f₀, f₁]` in background mode.
    pub latent: Vec<Vec<f64>>,
    /// Noise-free mixture.
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
    pub y: Vec<f64>,
    /// True when count intensities hit the clamp.
    #[serde(default)]
    pub clamped: bool,
}

impl SyntheticTruth {
    /// The warp that produced the surface.
    pub fn warp(&self) -> Warp {
        Warp::Polynomial(PolynomialWarp {
            coefficients: self.beta.clone(),
        })
    }
}

fn draw_beta(spec: &SyntheticSpec, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    if let Some(b) = &spec.beta {
        return Ok(b.clone());
    }
    let normal = Normal::new(0.0, spec.beta_variance.sqrt())
        .map_err(|e| GpcsError::InvalidParameter(e.to_string()))?;
    Ok((0..=spec.degree)
        .map(|_| (0..spec.grid.len()).map(|_| normal.sample(rng)).collect())
        .collect())
}

/// A model with `r = kernels.len()` regimes weighted by the softmax of
/// `r − 1` random polynomial warps and a zero warp. Used to build
/// realistic covariances for log-determinant benchmarks.
pub fn random_mixture_model(
    spec: &SyntheticSpec,
    kernels: Vec<Kernel>,
    seed: u64,
) -> Result<ChangeSurfaceModel> {
    spec.validate()?;
    if kernels.len() < 2 {
        return Err(GpcsError::InvalidParameter(
            "a mixture needs at least two kernels".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warps = (1..kernels.len())
        .map(|_| {
            Ok(Warp::Polynomial(PolynomialWarp {
                coefficients: draw_beta(spec, &mut rng)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    warps.push(Warp::Zero);
    let model = ChangeSurfaceModel {
        warps,
        kernels,
        noise: spec.noise,
        background: None,
    };
    model.validate()?;
    Ok(model)
}

/// Logistic of a polynomial warp with elementwise powers, evaluated on the
/// spec's grid.
pub fn gen_poly_surface(spec: &SyntheticSpec, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = draw_beta(spec, &mut rng)?;
    surface_from_beta(spec, &beta)
}

fn surface_from_beta(spec: &SyntheticSpec, beta: &[Vec<f64>]) -> Result<Vec<f64>> {
    let grid = spec.grid_spec()?;
    let warp = Warp::Polynomial(PolynomialWarp {
        coefficients: beta.to_vec(),
    });
    Ok((0..grid.len())
        .map(|g| logistic(warp.eval_point(&grid.point(g))))
        .collect())
}

/// One zero-mean GP draw on a grid through the Kronecker product of the
/// per-axis Cholesky factors.
pub fn grid_gp_draw(kernel: &Kernel, grid: &GridSpec, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let kron = grid_factors(kernel, grid)?;
    let lowers = kron
        .factors()
        .iter()
        .map(|f| {
            let scale = (0..f.nrows()).map(|i| f[(i, i)]).sum::<f64>() / f.nrows() as f64;
            Ok(Cholesky::new(f, JITTER_REL * scale)?.lower())
        })
        .collect::<Result<Vec<_>>>()?;
    let z: Vec<f64> = (0..grid.len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let refs: Vec<_> = lowers.iter().collect();
    kron_apply(&refs, &z)
}

struct Draw {
    grid: GridSpec,
    beta: Vec<Vec<f64>>,
    surface: Vec<f64>,
    latent: Vec<Vec<f64>>,
    signal: Vec<f64>,
    noise: Vec<f64>,
}

fn draw(spec: &SyntheticSpec, seed: u64) -> Result<Draw> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = spec.grid_spec()?;
    let beta = draw_beta(spec, &mut rng)?;
    let surface = match spec.forced_surface {
        Some(c) => vec![c; grid.len()],
        None => surface_from_beta(spec, &beta)?,
    };
    let latent = spec
        .kernels
        .iter()
        .map(|k| grid_gp_draw(k, &grid, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let signal: Vec<f64> = (0..grid.len())
        .map(|i| {
            let s = surface[i];
            match spec.mode {
                SyntheticMode::Standard => s * latent[0][i] + (1.0 - s) * latent[1][i],
                SyntheticMode::Background => latent[0][i] + s * latent[1][i],
            }
        })
        .collect();
    let sd = spec.noise.sqrt();
    let noise: Vec<f64> = (0..grid.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    Ok(Draw {
        grid,
        beta,
        surface,
        latent,
        signal,
        noise,
    })
}

/// Gaussian responses on the spec's grid.
pub fn gen_gpcs_data(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    let d = draw(spec, seed)?;
    let y: Vec<f64> = d.signal.iter().zip(&d.noise).map(|(s, e)| s + e).collect();
    let data = Dataset::new(d.grid.points(), y.clone())?;
    Ok((
        data,
        SyntheticTruth {
            mode: spec.mode,
            beta: d.beta,
            surface: d.surface,
            latent: d.latent,
            signal: d.signal,
            noise: d.noise,
            y,
            clamped: false,
        },
    ))
}

/// Poisson counts with rate `exp(min(latent, clamp))`. The flag reports
/// whether the clamp was hit.
pub fn lgcp_counts(latent: &[f64], clamp: f64, rng: &mut impl Rng) -> Result<(Vec<f64>, bool)> {
    let mut clamped = false;
    let counts = latent
        .iter()
        .map(|&l| {
            if l > clamp {
                clamped = true;
            }
            let rate = l.min(clamp).exp();
            if rate <= 0.0 {
                return Ok(0.0);
            }
            let p = Poisson::new(rate).map_err(|e| GpcsError::InvalidParameter(e.to_string()))?;
            Ok(p.sample(rng))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((counts, clamped))
}

/// Counts whose log intensity is the noisy mixture, one cell per grid node.
pub fn gen_lgcp_data(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    let d = draw(spec, seed)?;
    let latent: Vec<f64> = d.signal.iter().zip(&d.noise).map(|(s, e)| s + e).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (counts, clamped) = lgcp_counts(&latent, spec.latent_clamp, &mut rng)?;
    if clamped {
        log::warn!("log intensity clamped at {}", spec.latent_clamp);
    }
    let data = Dataset::new(d.grid.points(), counts.clone())?;
    Ok((
        data,
        SyntheticTruth {
            mode: spec.mode,
            beta: d.beta,
            surface: d.surface,
            latent: d.latent,
            signal: d.signal,
            noise: d.noise,
            y: counts,
            clamped,
        },
    ))
}

/// `‖y_test − y_pred‖² / ‖y_test − mean(y_train)‖²`.
pub fn nmse(y_test: &[f64], y_pred: &[f64], y_train: &[f64]) -> Result<f64> {
    if y_test.len() != y_pred.len() {
        return Err(GpcsError::Dimension(format!(
            "{} test values but {} predictions",
            y_test.len(),
            y_pred.len()
        )));
    }
    if y_train.is_empty() || y_test.is_empty() {
        return Err(GpcsError::Empty);
    }
    let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
    let num: f64 = y_test
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let den: f64 = y_test.iter().map(|a| (a - mean).powi(2)).sum();
    if den == 0.0 {
        return Err(GpcsError::ZeroDenominator);
    }
    Ok(num / den)
}

/// Seeded random split into `(train, test)` index sets with
/// `round(test_fraction · n)` test points, each sorted ascending.
pub fn holdout_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(GpcsError::InvalidParameter(
            "test fraction must lie in [0, 1)".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            grid: vec![12, 10],
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn random_mixture_has_one_zero_warp_per_model() {
        let spec = SyntheticSpec::default();
        let k = Kernel::rbf(1.0, vec![0.01, 0.01]);
        let m = random_mixture_model(&spec, vec![k.clone(), k.clone(), k], 3).unwrap();
        assert_eq!(m.r(), 3);
        assert_eq!(m.warps[2], Warp::Zero);
        let x = spec.grid_spec().unwrap().points();
        let s = m.weights(&x).unwrap();
        for i in 0..x.len() {
            assert!((s[0][i] + s[1][i] + s[2][i] - 1.0).abs() < 1e-12);
        }
        let again = random_mixture_model(&spec, m.kernels.clone(), 3).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn constant_warp_gives_half() {
        let spec = SyntheticSpec {
            degree: 0,
            beta: Some(vec![vec![0.0, 0.0]]),
            ..small()
        };
        let s = gen_poly_surface(&spec, 3).unwrap();
        assert!(s.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn surface_in_open_unit_interval_and_deterministic() {
        let spec = SyntheticSpec {
            beta_variance: 0.5,
            ..small()
        };
        let a = gen_poly_surface(&spec, 9).unwrap();
        let b = gen_poly_surface(&spec, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn forced_unit_surface_without_noise_returns_f1() {
        let spec = SyntheticSpec {
            noise: 0.0,
            forced_surface: Some(1.0),
            ..small()
        };
        let (data, truth) = gen_gpcs_data(&spec, 4).unwrap();
        assert_eq!(data.responses(), truth.latent[0].as_slice());
    }

    #[test]
    fn truth_components_reassemble_responses() {
        for mode in [SyntheticMode::Standard, SyntheticMode::Background] {
            let spec = SyntheticSpec { mode, ..small() };
            let (data, t) = gen_gpcs_data(&spec, 5).unwrap();
            for i in 0..data.len() {
                let s = t.surface[i];
                let mix = match mode {
                    SyntheticMode::Standard => s * t.latent[0][i] + (1.0 - s) * t.latent[1][i],
                    SyntheticMode::Background => t.latent[0][i] + s * t.latent[1][i],
                };
                assert_eq!(mix, t.signal[i]);
                assert_eq!(data.responses()[i], t.signal[i] + t.noise[i]);
            }
        }
    }

    #[test]
    fn response_variance_matches_mixture_moments() {
        let spec = SyntheticSpec {
            noise: 0.1,
            ..small()
        };
        let mut emp = 0.0;
        let mut theory = 0.0;
        for seed in 0..20 {
            let (data, t) = gen_gpcs_data(&spec, seed).unwrap();
            let n = data.len() as f64;
            emp += data.responses().iter().map(|y| y * y).sum::<f64>() / n;
            theory += t
                .surface
                .iter()
                .map(|s| s * s + (1.0 - s) * (1.0 - s))
                .sum::<f64>()
                / n
                + spec.noise;
        }
        assert!((emp / theory - 1.0).abs() < 0.2, "{emp} vs {theory}");
    }

    #[test]
    fn poisson_moment_and_low_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c, clamped) = lgcp_counts(&vec![0.0; 2500], 20.0, &mut rng).unwrap();
        let mean = c.iter().sum::<f64>() / 2500.0;
        assert!((0.8..=1.2).contains(&mean));
        assert!(!clamped);
        let (c, _) = lgcp_counts(&vec![-1e4; 100], 20.0, &mut rng).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
        let (_, clamped) = lgcp_counts(&[25.0], 20.0, &mut rng).unwrap();
        assert!(clamped);
    }

    #[test]
    fn lgcp_is_seeded_and_integral() {
        let spec = small();
        let (a, _) = gen_lgcp_data(&spec, 2).unwrap();
        let (b, _) = gen_lgcp_data(&spec, 2).unwrap();
        assert_eq!(a.responses(), b.responses());
        assert!(a.responses().iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
    }

    #[test]
    fn nmse_examples() {
        assert!((nmse(&[1.0, 2.0], &[1.0, 1.0], &[-1.0, 1.0]).unwrap() - 0.2).abs() < 1e-15);
        let y = [0.3, 1.5, -2.0];
        assert_eq!(nmse(&y, &y, &[0.0, 1.0]).unwrap(), 0.0);
        assert!((nmse(&y, &[0.5; 3], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            nmse(&[1.0, 1.0], &[0.0, 0.0], &[1.0]),
            Err(GpcsError::ZeroDenominator)
        ));
    }

    #[test]
    fn holdout_partitions_indices() {
        let (tr, te) = holdout_split(100, 0.2, 3).unwrap();
        assert_eq!(te.len(), 20);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn nmse_affine_invariant(
                vals in proptest::collection::vec(-10.0f64..10.0, 9),
                a in 0.1f64..10.0,
                b in -5.0f64..5.0,
            ) {
                let (t, rest) = vals.split_at(3);
                let (p, tr) = rest.split_at(3);
                prop_assume!(t.iter().any(|v| (v - t[0]).abs() > 1e-3));
                let f = |v: &[f64]| v.iter().map(|x| a * x + b).collect::<Vec<_>>();
                let base = nmse(t, p, tr).unwrap();
                let moved = nmse(&f(t), &f(p), &f(tr)).unwrap();
                prop_assert!((base - moved).abs() <= 1e-12 * base.max(1.0));
            }
        }
    }
}
