// SPDX-License-Identifier: MIT OR Apache-2.0

//! The demo's state and operations, independent of the browser bindings.

use gpcs::inference::{exact_logdet, logdet_bound, term_spectra};
use gpcs::prelude::*;
use gpcs::surface::gpcs_operator;
use serde::Serialize;

/// Largest grid side the page offers for fitting.
pub const MAX_FIT_SIDE: usize = 30;
/// Largest grid side for the bound comparison, which factors the dense matrix.
pub const MAX_EXACT_SIDE: usize = 40;
const RESOLUTION: usize = 200;

/// A simulated dataset on a `side × side` grid over the unit square.
pub struct Session {
    spec: SyntheticSpec,
    data: Dataset,
    truth: SyntheticTruth,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitOptions {
    pub m1: usize,
    pub m2: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            m1: 10,
            m2: 5,
            max_iter: 60,
            seed: 0,
        }
    }
}

/// What the page draws after a fit. Grids are row-major with `x1` fastest.
#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub nll: f64,
    pub iterations: usize,
    pub surface: Vec<f64>,
    pub surface_mse: f64,
    /// `x1` value of each row of the midpoint curves.
    pub rows: Vec<f64>,
    /// Where `s₁` crosses one half along `x0`, per row.
    pub midpoints: Vec<Option<f64>>,
    pub true_midpoints: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Bounds {
    pub n: usize,
    pub terms: usize,
    pub exact: f64,
    pub fiedler: Option<f64>,
    pub weyl_exact: f64,
    pub weyl_middle: f64,
    pub weyl_greedy: f64,
}

fn check_side(side: usize, max: usize) -> Result<()> {
    if !(4..=max).contains(&side) {
        return Err(GpcsError::InvalidParameter(format!(
            "grid side {side} outside 4..={max}"
        )));
    }
    Ok(())
}

impl Session {
    pub fn simulate(side: usize, seed: u64, noise: f64) -> Result<Self> {
        check_side(side, MAX_FIT_SIDE)?;
        let spec = SyntheticSpec {
            grid: vec![side, side],
            noise,
            ..SyntheticSpec::default()
        };
        let (data, truth) = gen_gpcs_data(&spec, seed)?;
        Ok(Self { spec, data, truth })
    }

    pub fn side(&self) -> usize {
        self.spec.grid[0]
    }

    pub fn observed(&self) -> &[f64] {
        self.data.responses()
    }

    pub fn true_surface(&self) -> &[f64] {
        &self.truth.surface
    }

    fn row_coords(&self) -> Vec<f64> {
        let side = self.side();
        (0..side).map(|j| j as f64 / (side - 1) as f64).collect()
    }

    fn midpoints(
        &self,
        model: &ChangeSurfaceModel,
        params: Option<&StandardizationParams>,
    ) -> Result<Vec<Option<f64>>> {
        let locations: Vec<Vec<f64>> = self.row_coords().into_iter().map(|v| vec![v]).collect();
        let sweep = SweepSpec {
            axis: 0,
            lo: 0.0,
            hi: 1.0,
            resolution: RESOLUTION,
            data_range: None,
        };
        Ok(change_summary(model, params, &locations, &sweep)?
            .into_iter()
            .map(|c| c.midpoint)
            .collect())
    }

    /// Initializes from the data, optimizes, and orients the result to
    /// match the true surface.
    pub fn fit(&self, options: &FitOptions) -> Result<FitSummary> {
        let (std_data, params) = standardize(&self.data)?;
        let init = InitConfig {
            m1: options.m1,
            m2: options.m2,
            ..InitConfig::default()
        };
        let model = init_model(&std_data, &init, options.seed)?;
        let config = FitConfig {
            restarts: 1,
            max_iter: options.max_iter,
            seed: options.seed,
            ..FitConfig::default()
        };
        let result = fit(&model, &std_data, &config)?;
        let model = result
            .model
            .oriented_to(std_data.inputs(), &self.truth.surface)?;
        let surface = model.weights(std_data.inputs())?.swap_remove(0);
        let surface_mse = surface
            .iter()
            .zip(&self.truth.surface)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / surface.len() as f64;

        let truth_model = ChangeSurfaceModel::two_regime(
            self.truth.warp(),
            self.spec.kernels[0].clone(),
            self.spec.kernels[1].clone(),
            self.spec.noise,
        )?;
        Ok(FitSummary {
            nll: result.best_nll,
            iterations: result.iterations,
            surface,
            surface_mse,
            rows: self.row_coords(),
            midpoints: self.midpoints(&model, Some(&params))?,
            true_midpoints: self.midpoints(&truth_model, None)?,
        })
    }
}

/// Exact log-determinant of a random mixture covariance on a `side × side`
/// grid next to its Fiedler and Weyl bounds.
pub fn logdet_bounds(side: usize, terms: usize, seed: u64) -> Result<Bounds> {
    check_side(side, MAX_EXACT_SIDE)?;
    if !(2..=3).contains(&terms) {
        return Err(GpcsError::InvalidParameter(format!(
            "{terms} terms; the demo offers 2 or 3"
        )));
    }
    let spec = SyntheticSpec::default();
    let mut kernels = spec.kernels.clone();
    if terms == 3 {
        kernels.push(Kernel::rbf(1.0, vec![0.1 * 0.1; 2]));
    }
    let model = random_mixture_model(&spec, kernels, seed)?;
    let op = gpcs_operator(&model, &GridSpec::unit(2, side)?)?;
    let spectra = term_spectra(&op)?;
    let bound = |m| logdet_bound(&spectra, op.noise(), m);
    Ok(Bounds {
        n: op.len(),
        terms,
        exact: exact_logdet(&op)?,
        fiedler: if terms == 2 {
            Some(bound(LogDetMethod::Fiedler)?)
        } else {
            None
        },
        weyl_exact: bound(LogDetMethod::WeylExact)?,
        weyl_middle: bound(LogDetMethod::WeylMiddle)?,
        weyl_greedy: bound(LogDetMethod::WeylGreedy { v: 80 })?,
    })
}
