// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use gpcs::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// A CSV file being written row by row.
pub struct Table {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl Table {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|source| CliError::Write {
            path: self.path.clone(),
            source,
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `dir/stem.suffix` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Everything `predict`, `counterfactual` and `summarize` need from a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub input_columns: Vec<String>,
    pub response_column: String,
    pub standardization: StandardizationParams,
    /// Fitted on standardized inputs and responses.
    pub model: ChangeSurfaceModel,
    /// Training data in original units.
    pub train: Dataset,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let raw: serde_json::Value = read_json(path)?;
        let version = raw.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(usage(format!(
                "{}: unsupported schema_version {version:?} (expected {SCHEMA_VERSION})",
                path.display()
            )));
        }
        let file: ModelFile = serde_json::from_value(raw).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if file.input_columns.len() != file.model.dim() || file.train.dim() != file.model.dim() {
            return Err(usage(format!(
                "{}: input columns, training data and model disagree on dimension",
                path.display()
            )));
        }
        Ok(file)
    }

    pub fn standardized_train(&self) -> Result<Dataset> {
        Ok(self.standardization.apply(&self.train)?)
    }

    pub fn axis_index(&self, axis: &str) -> Result<usize> {
        axis_index(&self.input_columns, axis)
    }
}

/// A column name or a zero-based index.
pub fn axis_index(columns: &[String], axis: &str) -> Result<usize> {
    if let Some(i) = columns.iter().position(|c| c == axis) {
        return Ok(i);
    }
    match axis.parse::<usize>() {
        Ok(i) if i < columns.len() => Ok(i),
        _ => Err(usage(format!(
            "sweep axis {axis:?} is neither an input column nor an index below {}",
            columns.len()
        ))),
    }
}

/// Header of a CSV file.
pub fn csv_header(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::Reader::from_reader(file);
    Ok(rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}
