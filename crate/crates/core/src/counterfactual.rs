// SPDX-License-Identifier: MIT OR Apache-2.0

//! Posteriors of the individual regime functions given the mixed
//! observations, including where a regime is switched off.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PointSet};
use crate::dense::{Cholesky, JITTER_REL};
use crate::error::{GpcsError, Result};
use crate::inference::DENSE_LIMIT;
use crate::kron::cg_solve;
use crate::surface::ChangeSurfaceModel;

/// Clamp applied to slightly negative variances.
pub const VARIANCE_CLAMP: f64 = -1e-8;

/// How the conditioning is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CounterfactualMethod {
    #[default]
    Dense,
    /// Experimental: CG solves with matrix-free covariance products and a
    /// Rademacher-probe estimate of the marginal variances.
    Cg {
        probes: usize,
        tol: f64,
        max_iter: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRequest {
    pub query: PointSet,
    /// Indices into the model's two functions: `[f₁, f₂]` in the standard
    /// form, `[f₀, f₁]` in the background form.
    pub functions: Vec<usize>,
    pub full_covariance: bool,
    #[serde(default)]
    pub method: CounterfactualMethod,
}

impl CounterfactualRequest {
    /// Marginal posteriors of both functions.
    pub fn marginals(query: PointSet) -> Self {
        Self {
            query,
            functions: vec![0, 1],
            full_covariance: false,
            method: CounterfactualMethod::Dense,
        }
    }

    pub fn with_covariance(mut self) -> Self {
        self.full_covariance = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionPosterior {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
}

impl FunctionPosterior {
    pub fn sd(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub functions: Vec<FunctionPosterior>,
    /// Posterior cross-covariance of the first two requested functions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_cov: Option<Vec<Vec<f64>>>,
}

impl CounterfactualResult {
    pub fn get(&self, name: &str) -> Option<&FunctionPosterior> {
        self.functions.iter().find(|f| f.name == name)
    }
}

/// Prior blocks for `u = [g₁(X*), g₂(X*)]` and `y`.
#[derive(Clone, Debug)]
pub struct JointCovariances {
    /// `2a × 2a`, block diagonal.
    pub uu: Mat<f64>,
    /// `2a × n`.
    pub uy: Mat<f64>,
    /// `n × n`, noise included.
    pub yy: Mat<f64>,
}

/// Function names of a model form.
pub fn function_names(model: &ChangeSurfaceModel) -> [&'static str; 2] {
    if model.is_background() {
        ["f0", "f1"]
    } else {
        ["f1", "f2"]
    }
}

fn check(model: &ChangeSurfaceModel, data: &Dataset, x_star: &PointSet) -> Result<()> {
    model.validate()?;
    if model.r() != 2 {
        return Err(GpcsError::InvalidParameter(format!(
            "counterfactuals need two regimes, the model has {}",
            model.r()
        )));
    }
    if data.dim() != model.dim() || x_star.dim() != model.dim() {
        return Err(GpcsError::Dimension(format!(
            "model is {}-dimensional, data {} and query {}",
            model.dim(),
            data.dim(),
            x_star.dim()
        )));
    }
    if x_star.is_empty() {
        return Err(GpcsError::Empty);
    }
    Ok(())
}

/// Prior covariances of the two functions at `x_star` and the
/// observations at the training inputs.
pub fn joint_covariances(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    x_star: &PointSet,
) -> Result<JointCovariances> {
    check(model, data, x_star)?;
    let x = data.inputs();
    let (n, a) = (x.len(), x_star.len());
    let s = model.weights(x)?;
    let mut uu = Mat::<f64>::zeros(2 * a, 2 * a);
    let mut uy = Mat::<f64>::zeros(2 * a, n);
    let mut yy = Mat::<f64>::zeros(n, n);
    for (b, c) in model.components().iter().enumerate() {
        let kss = c.kernel.eval(x_star, x_star)?;
        let ksx = c.kernel.eval(x_star, x)?;
        let kxx = c.kernel.gram(x)?;
        let scale = |i: usize| c.regime.map_or(1.0, |r| s[r][i]);
        for j in 0..a {
            for i in 0..a {
                uu[(b * a + i, b * a + j)] = kss[(i, j)];
            }
        }
        for j in 0..n {
            let sj = scale(j);
            for i in 0..a {
                uy[(b * a + i, j)] = ksx[(i, j)] * sj;
            }
            for i in 0..n {
                yy[(i, j)] += scale(i) * kxx[(i, j)] * sj;
            }
        }
    }
    for i in 0..n {
        yy[(i, i)] += model.noise;
    }
    Ok(JointCovariances { uu, uy, yy })
}

fn jitter(model: &ChangeSurfaceModel) -> f64 {
    let s2 = model.signal_variance();
    if model.noise >= JITTER_REL * s2 {
        0.0
    } else {
        JITTER_REL * s2
    }
}

/// `u | y` for the requested functions.
pub fn counterfactual_posterior(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    request: &CounterfactualRequest,
) -> Result<CounterfactualResult> {
    if request.functions.is_empty() || request.functions.iter().any(|&f| f > 1) {
        return Err(GpcsError::InvalidParameter(
            "functions must be a non-empty subset of {0, 1}".into(),
        ));
    }
    match request.method {
        CounterfactualMethod::Dense => dense_posterior(model, data, request),
        CounterfactualMethod::Cg {
            probes,
            tol,
            max_iter,
            seed,
        } => {
            if request.full_covariance {
                return Err(GpcsError::InvalidParameter(
                    "the CG path returns marginal variances only".into(),
                ));
            }
            cg_posterior(model, data, request, probes, tol, max_iter, seed)
        }
    }
}

/// [`counterfactual_posterior`] restricted to background-form models.
pub fn background_counterfactual(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    request: &CounterfactualRequest,
) -> Result<CounterfactualResult> {
    if !model.is_background() {
        return Err(GpcsError::InvalidParameter(
            "the model has no background function".into(),
        ));
    }
    counterfactual_posterior(model, data, request)
}

fn dense_posterior(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    request: &CounterfactualRequest,
) -> Result<CounterfactualResult> {
    if data.len() > DENSE_LIMIT {
        return Err(GpcsError::InvalidParameter(format!(
            "{} points exceed the dense limit; use the CG method",
            data.len()
        )));
    }
    let jc = joint_covariances(model, data, &request.query)?;
    let a = request.query.len();
    let n = data.len();
    let chol = Cholesky::new(&jc.yy, jitter(model))?;
    let alpha = chol.solve(data.responses());
    let names = function_names(model);
    let mut vs: Vec<Mat<f64>> = Vec::new();
    let mut functions = Vec::new();
    for &f in &request.functions {
        let block = Mat::from_fn(n, a, |i, j| jc.uy[(f * a + j, i)]);
        let mean: Vec<f64> = (0..a)
            .map(|j| (0..n).map(|i| block[(i, j)] * alpha[i]).sum())
            .collect();
        let v = chol.lower_solve(&block);
        let var: Vec<f64> = (0..a)
            .map(|j| {
                let explained: f64 = (0..n).map(|i| v[(i, j)] * v[(i, j)]).sum();
                clamp_var(jc.uu[(f * a + j, f * a + j)] - explained)
            })
            .collect();
        let cov = request.full_covariance.then(|| {
            (0..a)
                .map(|i| {
                    (0..a)
                        .map(|j| {
                            let c = jc.uu[(f * a + i, f * a + j)]
                                - (0..n).map(|k| v[(k, i)] * v[(k, j)]).sum::<f64>();
                            if i == j {
                                clamp_var(c)
                            } else {
                                c
                            }
                        })
                        .collect()
                })
                .collect()
        });
        functions.push(FunctionPosterior {
            name: names[f].to_string(),
            mean,
            var,
            cov,
        });
        vs.push(v);
    }
    let cross_cov = (request.full_covariance && vs.len() >= 2).then(|| {
        (0..a)
            .map(|i| {
                (0..a)
                    .map(|j| -(0..n).map(|k| vs[0][(k, i)] * vs[1][(k, j)]).sum::<f64>())
                    .collect()
            })
            .collect()
    });
    Ok(CounterfactualResult {
        functions,
        cross_cov,
    })
}

fn clamp_var(v: f64) -> f64 {
    if v < VARIANCE_CLAMP {
        log::warn!("posterior variance {v:e} below clamp");
    }
    v.max(0.0)
}

fn cg_posterior(
    model: &ChangeSurfaceModel,
    data: &Dataset,
    request: &CounterfactualRequest,
    probes: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<CounterfactualResult> {
    check(model, data, &request.query)?;
    if probes == 0 {
        return Err(GpcsError::InvalidParameter(
            "at least one probe is needed".into(),
        ));
    }
    let x = data.inputs();
    let xs = &request.query;
    let (n, a) = (x.len(), xs.len());
    let s = model.weights(x)?;
    let comps = model.components();
    let scale = |c: usize, i: usize| comps[c].regime.map_or(1.0, |r| s[r][i]);
    let apply_yy = |v: &[f64]| -> Result<Vec<f64>> {
        let mut out: Vec<f64> = v.iter().map(|vi| model.noise * vi).collect();
        for (ci, c) in comps.iter().enumerate() {
            for i in 0..n {
                let xi = x.row(i);
                let si = scale(ci, i);
                let mut acc = 0.0;
                for j in 0..n {
                    acc += c.kernel.eval_pair(xi, x.row(j)) * scale(ci, j) * v[j];
                }
                out[i] += si * acc;
            }
        }
        Ok(out)
    };
    // Σ_uy block f times v (length n), and its transpose times z (length a).
    let uy_mul = |f: usize, v: &[f64]| -> Vec<f64> {
        (0..a)
            .map(|i| {
                (0..n)
                    .map(|j| comps[f].kernel.eval_pair(xs.row(i), x.row(j)) * scale(f, j) * v[j])
                    .sum()
            })
            .collect()
    };
    let uy_t_mul = |f: usize, z: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                scale(f, j)
                    * (0..a)
                        .map(|i| comps[f].kernel.eval_pair(xs.row(i), x.row(j)) * z[i])
                        .sum::<f64>()
            })
            .collect()
    };
    let sol = cg_solve(apply_yy, data.responses(), tol, max_iter)?;
    if !sol.converged {
        log::warn!("counterfactual CG stopped at residual {:e}", sol.residual);
    }
    let names = function_names(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut functions = Vec::new();
    for &f in &request.functions {
        let mean = uy_mul(f, &sol.x);
        let mut diag = vec![0.0; a];
        for _ in 0..probes {
            let z: Vec<f64> = (0..a)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let b = uy_t_mul(f, &z);
            let w = cg_solve(apply_yy, &b, tol, max_iter)?;
            let az = uy_mul(f, &w.x);
            for i in 0..a {
                diag[i] += z[i] * az[i] / probes as f64;
            }
        }
        let var = (0..a)
            .map(|i| clamp_var(comps[f].kernel.eval_pair(xs.row(i), xs.row(i)) - diag[i]))
            .collect();
        functions.push(FunctionPosterior {
            name: names[f].to_string(),
            mean,
            var,
            cov: None,
        });
    }
    Ok(CounterfactualResult {
        functions,
        cross_cov: None,
    })
}
