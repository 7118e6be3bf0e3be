// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run settings merged from defaults, an optional JSON file and flags.
//! Flags win over the file, the file wins over defaults.

use std::path::{Path, PathBuf};

use gpcs::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, CliError, Result};

/// One layer of settings. The JSON config file and the parsed flags both
/// produce a `Layer`; [`Layer::overlay`] merges them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layer {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub curve: Option<PathBuf>,
    pub locations: Option<PathBuf>,
    pub x_cols: Option<Vec<String>>,
    pub y_col: Option<String>,
    pub form: Option<ModelForm>,
    pub r: Option<usize>,
    pub family: Option<KernelFamily>,
    pub q: Option<usize>,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
    pub logdet: Option<LogDetMethod>,
    pub latent_grid: Option<Vec<usize>>,
    pub fit_points: Option<usize>,
    pub holdout: Option<f64>,
    pub seed: Option<u64>,
    pub sweep_axis: Option<String>,
    pub sweep_lo: Option<f64>,
    pub sweep_hi: Option<f64>,
    pub resolution: Option<usize>,
    pub functions: Option<Vec<String>>,
    pub counts: Option<bool>,
    pub grid: Option<Vec<usize>>,
    pub noise: Option<f64>,
    pub degree: Option<usize>,
    pub mode: Option<SyntheticMode>,
    pub sizes: Option<Vec<usize>>,
    pub terms: Option<Vec<usize>>,
    pub seeds: Option<usize>,
    pub greedy_v: Option<usize>,
    pub init: Option<InitConfig>,
    pub fit: Option<FitConfig>,
    pub simulate: Option<SyntheticSpec>,
    pub benchmark: Option<BenchConfig>,
}

macro_rules! overlay_fields {
    ($top:ident, $base:ident, $($f:ident),*) => {
        Layer { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Layer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: Layer) -> Layer {
        let base = self;
        overlay_fields!(
            top,
            base,
            data,
            out,
            model,
            query,
            report,
            weights,
            truth,
            curve,
            locations,
            x_cols,
            y_col,
            form,
            r,
            family,
            q,
            m1,
            m2,
            restarts,
            max_iter,
            logdet,
            latent_grid,
            fit_points,
            holdout,
            seed,
            sweep_axis,
            sweep_lo,
            sweep_hi,
            resolution,
            functions,
            counts,
            grid,
            noise,
            degree,
            mode,
            sizes,
            terms,
            seeds,
            greedy_v,
            init,
            fit,
            simulate,
            benchmark
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| usage(format!("missing required --{flag}")))
    }

    /// Initialization settings: defaults, then the nested `init` object,
    /// then the top-level shortcuts.
    pub fn init_config(&self) -> Result<InitConfig> {
        let mut c = self.init.clone().unwrap_or_default();
        if let Some(v) = self.form {
            c.form = v;
        }
        if let Some(v) = self.family {
            c.family = v;
        }
        if let Some(v) = self.q {
            c.q = v;
        }
        if let Some(v) = self.m1 {
            c.m1 = v;
        }
        if let Some(v) = self.m2 {
            c.m2 = v;
        }
        if let Some(r) = self.r {
            if r != 2 {
                return Err(usage(format!(
                    "r = {r}: only two regimes can be initialized"
                )));
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Optimizer settings: defaults, then the nested `fit` object, then the
    /// top-level shortcuts. A bound method switches the default gradient
    /// to central differences.
    pub fn fit_config(&self) -> Result<FitConfig> {
        let mut c = self.fit.clone().unwrap_or_default();
        if let Some(m) = self.logdet {
            c.logdet = m;
        }
        if c.logdet != LogDetMethod::Exact && c.gradient == GradientScheme::Analytic {
            c.gradient = FitConfig::bound(c.logdet).gradient;
        }
        if let Some(v) = self.restarts {
            c.restarts = v;
        }
        if let Some(v) = self.max_iter {
            c.max_iter = v;
        }
        if let Some(v) = &self.latent_grid {
            c.latent_grid = Some(v.clone());
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.validate()?;
        Ok(c)
    }

    /// Generator settings: defaults, then the nested `simulate` object,
    /// then the top-level shortcuts.
    pub fn simulate_spec(&self) -> Result<SyntheticSpec> {
        let mut s = self.simulate.clone().unwrap_or_default();
        if let Some(g) = &self.grid {
            if g.len() != s.bounds.len() {
                s.bounds = vec![(0.0, 1.0); g.len()];
                let k = s.kernels.clone();
                s.kernels = k
                    .into_iter()
                    .map(|k| match k {
                        Kernel::Rbf(p) => {
                            Kernel::rbf(p.signal_variance, vec![p.bandwidths[0]; g.len()])
                        }
                        other => other,
                    })
                    .collect();
            }
            s.grid = g.clone();
        }
        if let Some(v) = self.noise {
            s.noise = v;
        }
        if let Some(v) = self.degree {
            s.degree = v;
        }
        if let Some(v) = self.mode {
            s.mode = v;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn bench_config(&self) -> Result<BenchConfig> {
        let mut c = self.benchmark.clone().unwrap_or_default();
        if let Some(v) = &self.sizes {
            c.sizes = v.clone();
        }
        if let Some(v) = &self.terms {
            c.terms = v.clone();
        }
        if let Some(v) = self.seeds {
            c.seeds = v;
        }
        if let Some(v) = self.greedy_v {
            c.greedy_v = v;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Settings of the log-determinant benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Requested sizes; each becomes the nearest square grid.
    pub sizes: Vec<usize>,
    pub terms: Vec<usize>,
    pub seeds: usize,
    pub greedy_v: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![256, 1024],
            terms: vec![2, 3],
            seeds: 3,
            greedy_v: 80,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n < 4) {
            return Err(usage("benchmark sizes must be at least 4"));
        }
        if self.terms.iter().any(|&t| !(2..=4).contains(&t)) {
            return Err(usage("benchmark term counts must lie in 2..=4"));
        }
        if self.seeds == 0 || self.greedy_v == 0 {
            return Err(usage("seeds and greedy width must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_layer_wins() {
        let file = Layer {
            q: Some(2),
            seed: Some(5),
            ..Default::default()
        };
        let flags = Layer {
            q: Some(4),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.q, Some(4));
        assert_eq!(merged.seed, Some(5));
        assert_eq!(merged.init_config().unwrap().q, 4);
    }

    #[test]
    fn shortcuts_override_nested_objects() {
        let layer: Layer = serde_json::from_str(r#"{"init": {"q": 2, "m1": 7}, "q": 5}"#).unwrap();
        let c = layer.init_config().unwrap();
        assert_eq!((c.q, c.m1), (5, 7));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<Layer>(r#"{"qq": 1}"#).is_err());
        assert!(serde_json::from_str::<Layer>(r#"{"init": {"bogus": 1}}"#).is_err());
    }

    #[test]
    fn zero_components_fail_validation() {
        let layer = Layer {
            q: Some(0),
            ..Default::default()
        };
        let err = layer.init_config().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bound_methods_default_to_finite_differences() {
        let layer = Layer {
            logdet: Some(LogDetMethod::WeylMiddle),
            ..Default::default()
        };
        let c = layer.fit_config().unwrap();
        assert!(matches!(
            c.gradient,
            GradientScheme::FiniteDifference { .. }
        ));
    }
}
