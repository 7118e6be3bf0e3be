// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

/// Errors raised across the change-surface toolkit.
#[derive(Debug, Error)]
pub enum GpcsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: value is not finite")]
    NonFinite { row: usize, column: String },
    #[error("zero rows")]
    Empty,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("response is constant (standard deviation zero)")]
    ConstantResponse,
    #[error("kernel is not multiplicative across input dimensions")]
    NotMultiplicative,
    #[error("cholesky factorization failed after jitter escalation (last jitter {jitter:e})")]
    Factorization { jitter: f64 },
    #[error("symmetric eigendecomposition failed")]
    Eigen,
    #[error("log-determinant bound hit log(0): zero eigenvalue bound with zero noise")]
    LogOfZero,
    #[error("normalized MSE denominator is zero")]
    ZeroDenominator,
    #[error("all {} optimizer restarts diverged", traces.len())]
    Diverged { traces: Vec<Vec<f64>> },
}

pub type Result<T> = std::result::Result<T, GpcsError>;

impl GpcsError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            GpcsError::Factorization { .. }
                | GpcsError::Eigen
                | GpcsError::LogOfZero
                | GpcsError::Diverged { .. }
        )
    }
}
