// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gaussian process change surfaces.
//!
//! A change surface generalizes a changepoint to several input dimensions:
//! latent regimes `f_i` are mixed by smooth weights `s_i(x)` that sum to one,
//!
//! ```text
//! y(x) = s_1(x) f_1(x) + … + s_r(x) f_r(x) + ε
//! ```
//!
//! with `s = softmax(w(x))` for learned warps `w`. The crate covers model
//! assembly, exact and Kronecker-structured marginal likelihoods (with Weyl
//! and Fiedler log-determinant bounds), data-driven initialization,
//! counterfactual posteriors for each regime, and seeded synthetic data.
//!
//! ```no_run
//! use gpcs::prelude::*;
//!
//! let spec = SyntheticSpec::default();
//! let (data, _truth) = gen_gpcs_data(&spec, 7).unwrap();
//! let (std_data, _params) = standardize(&data).unwrap();
//! let model = init_model(&std_data, &InitConfig::default(), 7).unwrap();
//! let fit = fit(&model, &std_data, &FitConfig::default()).unwrap();
//! println!("nll {}", fit.best_nll);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod counterfactual;
pub mod data;
pub mod dense;
pub mod error;
pub mod inference;
pub mod init;
pub mod kernels;
pub mod kron;
pub mod surface;
pub mod synthetic;

pub use error::{GpcsError, Result};

pub mod prelude {
    pub use crate::counterfactual::{
        background_counterfactual, counterfactual_posterior, joint_covariances,
        CounterfactualMethod, CounterfactualRequest, CounterfactualResult, FunctionPosterior,
    };
    pub use crate::data::{
        detect_grid, load_csv, load_points_csv, standardize, CsvColumns, Dataset, GridMatch,
        GridSpec, PointSet, StandardizationParams,
    };
    pub use crate::error::{GpcsError, Result};
    pub use crate::inference::{
        approx_nll, exact_nll, exact_nll_grad, fiedler_logdet, fit, predict, scaled_spectrum,
        weyl_logdet, CgOptions, FitConfig, FitResult, GradientScheme, LogDetMethod, Prediction,
        Structure,
    };
    pub use crate::init::{
        gmm_fit_1d, init_model, init_sm, init_warp_rbf, random_init, spectrum_samples, InitConfig,
        KernelFamily, ModelForm,
    };
    pub use crate::kernels::{Kernel, RbfParams, Sm1d, SmParams, SmProductParams};
    pub use crate::kron::{cg_solve, kron_eigvals, EigenList, KronMatrix, ScaledKronSum};
    pub use crate::surface::{
        change_summary, softmax_weights, ChangeSummary, ChangeSurfaceModel, SweepSpec, Warp,
    };
    pub use crate::synthetic::{
        gen_gpcs_data, gen_lgcp_data, gen_poly_surface, holdout_split, nmse, random_mixture_model,
        SyntheticMode, SyntheticSpec, SyntheticTruth,
    };
}
