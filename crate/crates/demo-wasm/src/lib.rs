// SPDX-License-Identifier: MIT OR Apache-2.0

//! Browser bindings for the change-surface demo page in `www/`.
//!
//! Results cross the boundary as JSON strings or `Float64Array`s.

pub mod session;

use wasm_bindgen::prelude::*;

use crate::session::{FitOptions, Session};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A simulated dataset kept alive between page actions.
#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    /// Draws a new dataset on a `side × side` grid.
    #[wasm_bindgen(constructor)]
    pub fn new(side: usize, seed: u64, noise: f64) -> Result<Demo, JsError> {
        Ok(Demo {
            session: Session::simulate(side, seed, noise).map_err(js_err)?,
        })
    }

    pub fn side(&self) -> usize {
        self.session.side()
    }

    pub fn observed(&self) -> Vec<f64> {
        self.session.observed().to_vec()
    }

    #[wasm_bindgen(js_name = trueSurface)]
    pub fn true_surface(&self) -> Vec<f64> {
        self.session.true_surface().to_vec()
    }

    /// Fits a two-regime model; returns the summary as JSON.
    pub fn fit(&self, m1: usize, m2: usize, max_iter: usize, seed: u64) -> Result<String, JsError> {
        let options = FitOptions {
            m1,
            m2,
            max_iter,
            seed,
        };
        let summary = self.session.fit(&options).map_err(js_err)?;
        serde_json::to_string(&summary).map_err(js_err)
    }
}

/// Exact log-determinant and its bounds as JSON.
#[wasm_bindgen(js_name = logdetBounds)]
pub fn logdet_bounds(side: usize, terms: usize, seed: u64) -> Result<String, JsError> {
    let b = session::logdet_bounds(side, terms, seed).map_err(js_err)?;
    serde_json::to_string(&b).map_err(js_err)
}
