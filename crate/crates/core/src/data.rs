// SPDX-License-Identifier: MIT OR Apache-2.0

//! Datasets, grid detection and standardization.
//!
//! Inputs are stored row-major in a [`PointSet`]. Grid order is row-major
//! over the axes with the last axis varying fastest, which is the index
//! order of `K_1 ⊗ … ⊗ K_D`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GpcsError, Result};

/// Default upper bound on the number of points a [`GridSpec`] may hold.
pub const DEFAULT_GRID_CAP: usize = 1 << 24;

/// Relative grid matching tolerance (multiplied by each axis range).
pub const DEFAULT_GRID_TOL: f64 = 1e-9;

/// A row-major set of `len` points in `dim` dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(GpcsError::Dimension(
                "points need at least one dimension".into(),
            ));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(GpcsError::Dimension(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(GpcsError::Empty)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(GpcsError::Dimension(format!(
                    "row {i} has {} columns, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    /// One-dimensional points.
    pub fn from_column(values: &[f64]) -> Self {
        Self {
            dim: 1,
            data: values.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.rows().map(|r| r[d]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    /// Per-column (min, max).
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for row in self.rows() {
            for (bd, &v) in b.iter_mut().zip(row) {
                bd.0 = bd.0.min(v);
                bd.1 = bd.1.max(v);
            }
        }
        b
    }
}

/// Observations: `n` inputs in `D` dimensions with one scalar response each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    inputs: PointSet,
    responses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(inputs: PointSet, responses: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(GpcsError::Empty);
        }
        if inputs.len() != responses.len() {
            return Err(GpcsError::Dimension(format!(
                "{} input rows but {} responses",
                inputs.len(),
                responses.len()
            )));
        }
        for (i, row) in inputs.rows().enumerate() {
            if let Some(d) = row.iter().position(|v| !v.is_finite()) {
                return Err(GpcsError::NonFinite {
                    row: i + 1,
                    column: format!("input {d}"),
                });
            }
        }
        if let Some(i) = responses.iter().position(|v| !v.is_finite()) {
            return Err(GpcsError::NonFinite {
                row: i + 1,
                column: "response".into(),
            });
        }
        Ok(Self {
            inputs,
            responses,
            column_names: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() + 1 {
            return Err(GpcsError::Dimension(format!(
                "{} column names for {} inputs plus a response",
                names.len(),
                self.dim()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn inputs(&self) -> &PointSet {
        &self.inputs
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Input column names followed by the response name, when known.
    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut out = Dataset::new(
            self.inputs.select(idx),
            idx.iter().map(|&i| self.responses[i]).collect(),
        )?;
        out.column_names = self.column_names.clone();
        Ok(out)
    }

    /// Same inputs with replaced responses.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        let mut out = Dataset::new(self.inputs.clone(), responses)?;
        out.column_names = self.column_names.clone();
        Ok(out)
    }
}

/// Which CSV columns feed the inputs (in order) and the response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvColumns {
    pub inputs: Vec<String>,
    pub response: String,
}

impl CsvColumns {
    pub fn new<S: Into<String>>(
        inputs: impl IntoIterator<Item = S>,
        response: impl Into<String>,
    ) -> Self {
        Self {
            inputs: inputs.into_iter().map(Into::into).collect(),
            response: response.into(),
        }
    }
}

/// Reads a headered CSV file into a [`Dataset`], keeping file row order.
pub fn load_csv(path: impl AsRef<Path>, columns: &CsvColumns) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| GpcsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, columns)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, columns: &CsvColumns) -> Result<Dataset> {
    if columns.inputs.is_empty() {
        return Err(GpcsError::InvalidParameter(
            "no input columns selected".into(),
        ));
    }
    let mut names = columns.inputs.clone();
    names.push(columns.response.clone());
    let values = read_columns(reader, &names)?;
    let width = names.len();
    let n = values.len() / width;
    if n == 0 {
        return Err(GpcsError::Empty);
    }
    let mut inputs = Vec::with_capacity(n * (width - 1));
    let mut responses = Vec::with_capacity(n);
    for row in values.chunks(width) {
        inputs.extend_from_slice(&row[..width - 1]);
        responses.push(row[width - 1]);
    }
    Dataset::new(PointSet::new(width - 1, inputs)?, responses)?.with_column_names(names)
}

/// Reads the named columns of a headered CSV file as points.
pub fn load_points_csv(path: impl AsRef<Path>, columns: &[String]) -> Result<PointSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| GpcsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if columns.is_empty() {
        return Err(GpcsError::InvalidParameter("no columns selected".into()));
    }
    let values = read_columns(file, columns)?;
    if values.is_empty() {
        return Err(GpcsError::Empty);
    }
    PointSet::new(columns.len(), values)
}

/// Row-major values of the named columns, all required to be finite.
fn read_columns<R: std::io::Read>(reader: R, names: &[String]) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let idx = names
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| GpcsError::MissingColumn(name.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (&c, name) in idx.iter().zip(names) {
            let raw = record.get(c).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| GpcsError::NonNumeric {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(GpcsError::NonFinite {
                    row,
                    column: name.to_string(),
                });
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Cartesian product of per-axis coordinate vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    axes: Vec<Vec<f64>>,
}

impl GridSpec {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_cap(axes, DEFAULT_GRID_CAP)
    }

    pub fn with_cap(axes: Vec<Vec<f64>>, cap: usize) -> Result<Self> {
        if axes.is_empty() {
            return Err(GpcsError::Dimension("grid needs at least one axis".into()));
        }
        let mut total: usize = 1;
        for (d, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(GpcsError::InvalidParameter(format!(
                    "grid axis {d} is empty"
                )));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(GpcsError::InvalidParameter(format!(
                    "grid axis {d} is not finite"
                )));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(GpcsError::InvalidParameter(format!(
                    "grid axis {d} is not strictly increasing"
                )));
            }
            total = total.saturating_mul(axis.len());
        }
        if total > cap {
            return Err(GpcsError::InvalidParameter(format!(
                "grid has {total} points, above the cap of {cap}"
            )));
        }
        Ok(Self { axes })
    }

    /// `sizes[d]` evenly spaced points on `[lo_d, hi_d]`.
    pub fn uniform(bounds: &[(f64, f64)], sizes: &[usize]) -> Result<Self> {
        if bounds.len() != sizes.len() {
            return Err(GpcsError::Dimension(
                "bounds and sizes differ in length".into(),
            ));
        }
        let axes = bounds
            .iter()
            .zip(sizes)
            .map(|(&(lo, hi), &m)| linspace(lo, hi, m))
            .collect();
        Self::new(axes)
    }

    /// The unit hypercube sampled with `side` points per axis.
    pub fn unit(dim: usize, side: usize) -> Result<Self> {
        Self::uniform(&vec![(0.0, 1.0); dim], &vec![side; dim])
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis indices of grid position `g`.
    pub fn multi_index(&self, mut g: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            let m = self.axes[d].len();
            idx[d] = g % m;
            g /= m;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, axis)| acc * axis.len() + i)
    }

    pub fn point(&self, g: usize) -> Vec<f64> {
        self.multi_index(g)
            .iter()
            .zip(&self.axes)
            .map(|(&i, axis)| axis[i])
            .collect()
    }

    /// All grid points in grid order.
    pub fn points(&self) -> PointSet {
        let mut data = Vec::with_capacity(self.len() * self.dim());
        for g in 0..self.len() {
            data.extend(self.point(g));
        }
        PointSet {
            dim: self.dim(),
            data,
        }
    }
}

/// A dataset recognised as a complete grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMatch {
    pub grid: GridSpec,
    /// `grid_to_row[g]` is the dataset row sitting at grid position `g`.
    pub grid_to_row: Vec<usize>,
}

impl GridMatch {
    /// Reorders a per-row vector into grid order.
    pub fn to_grid_order(&self, values: &[f64]) -> Vec<f64> {
        self.grid_to_row.iter().map(|&r| values[r]).collect()
    }

    /// Reorders a grid-ordered vector back into dataset row order.
    pub fn to_row_order(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for (g, &r) in self.grid_to_row.iter().enumerate() {
            out[r] = values[g];
        }
        out
    }
}

/// Recognises inputs that are exactly a permutation of a Cartesian product.
///
/// `rel_tol` scales with each axis range; coordinates closer than that are
/// treated as equal. Returns `None` when the rows do not form a full grid.
pub fn detect_grid(dataset: &Dataset, rel_tol: f64) -> Option<GridMatch> {
    let x = dataset.inputs();
    let n = x.len();
    let dim = x.dim();
    let bounds = x.bounds();
    let mut axes = Vec::with_capacity(dim);
    let mut total: usize = 1;
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        let tol = rel_tol * (hi - lo).max(f64::MIN_POSITIVE);
        let mut col = x.column(d);
        col.sort_by(f64::total_cmp);
        let mut axis: Vec<f64> = Vec::new();
        for v in col {
            match axis.last() {
                Some(&last) if v - last <= tol => {}
                _ => axis.push(v),
            }
        }
        total = total.saturating_mul(axis.len());
        if total > n {
            return None;
        }
        axes.push((axis, tol));
    }
    if total != n {
        return None;
    }

    let mut grid_to_row = vec![usize::MAX; n];
    let sizes: Vec<usize> = axes.iter().map(|(a, _)| a.len()).collect();
    for (r, row) in x.rows().enumerate() {
        let mut g = 0;
        for (d, &v) in row.iter().enumerate() {
            let (axis, tol) = &axes[d];
            let i = nearest_index(axis, v);
            if (axis[i] - v).abs() > *tol {
                return None;
            }
            g = g * sizes[d] + i;
        }
        if grid_to_row[g] != usize::MAX {
            return None;
        }
        grid_to_row[g] = r;
    }
    let grid = GridSpec::new(axes.into_iter().map(|(a, _)| a).collect()).ok()?;
    Some(GridMatch { grid, grid_to_row })
}

fn nearest_index(sorted: &[f64], v: f64) -> usize {
    let p = sorted.partition_point(|&a| a < v);
    if p == 0 {
        0
    } else if p == sorted.len() {
        sorted.len() - 1
    } else if (sorted[p] - v).abs() < (v - sorted[p - 1]).abs() {
        p
    } else {
        p - 1
    }
}

/// Affine maps taking inputs to `[0, 1]` per column and responses to zero
/// mean, unit (population) standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub response_shift: f64,
    pub response_scale: f64,
    /// Input columns that were constant; they map to 0 with unit scale.
    #[serde(default)]
    pub constant_columns: Vec<usize>,
}

impl StandardizationParams {
    /// The map that changes nothing.
    pub fn identity(dim: usize) -> Self {
        Self {
            input_shift: vec![0.0; dim],
            input_scale: vec![1.0; dim],
            response_shift: 0.0,
            response_scale: 1.0,
            constant_columns: Vec::new(),
        }
    }

    pub fn transform_inputs(&self, x: &PointSet) -> Result<PointSet> {
        self.check_dim(x.dim())?;
        let data = x
            .rows()
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(d, &v)| (v - self.input_shift[d]) / self.input_scale[d])
            })
            .collect();
        PointSet::new(x.dim(), data)
    }

    pub fn inverse_inputs(&self, x: &PointSet) -> Result<PointSet> {
        self.check_dim(x.dim())?;
        let data = x
            .rows()
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(d, &v)| v * self.input_scale[d] + self.input_shift[d])
            })
            .collect();
        PointSet::new(x.dim(), data)
    }

    /// Maps one coordinate along axis `d` back to original units.
    pub fn inverse_coordinate(&self, d: usize, v: f64) -> f64 {
        v * self.input_scale[d] + self.input_shift[d]
    }

    pub fn transform_coordinate(&self, d: usize, v: f64) -> f64 {
        (v - self.input_shift[d]) / self.input_scale[d]
    }

    pub fn transform_responses(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|&v| (v - self.response_shift) / self.response_scale)
            .collect()
    }

    pub fn inverse_responses(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|&v| v * self.response_scale + self.response_shift)
            .collect()
    }

    /// Standard deviations scale but do not shift.
    pub fn inverse_sd(&self, sd: &[f64]) -> Vec<f64> {
        sd.iter().map(|&v| v * self.response_scale).collect()
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        let mut out = Dataset::new(
            self.transform_inputs(dataset.inputs())?,
            self.transform_responses(dataset.responses()),
        )?;
        out.column_names = dataset.column_names.clone();
        Ok(out)
    }

    pub fn inverse(&self, dataset: &Dataset) -> Result<Dataset> {
        let mut out = Dataset::new(
            self.inverse_inputs(dataset.inputs())?,
            self.inverse_responses(dataset.responses()),
        )?;
        out.column_names = dataset.column_names.clone();
        Ok(out)
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.input_shift.len() {
            return Err(GpcsError::Dimension(format!(
                "standardization fitted on {} inputs, got {dim}",
                self.input_shift.len()
            )));
        }
        Ok(())
    }
}

/// Fits and applies [`StandardizationParams`].
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, StandardizationParams)> {
    let (mean, sd) = mean_sd(dataset.responses());
    if !(sd > 0.0) {
        return Err(GpcsError::ConstantResponse);
    }
    let mut params = StandardizationParams {
        input_shift: Vec::with_capacity(dataset.dim()),
        input_scale: Vec::with_capacity(dataset.dim()),
        response_shift: mean,
        response_scale: sd,
        constant_columns: Vec::new(),
    };
    for (d, (lo, hi)) in dataset.inputs().bounds().into_iter().enumerate() {
        params.input_shift.push(lo);
        if hi > lo {
            params.input_scale.push(hi - lo);
        } else {
            log::warn!("input column {d} is constant; mapped to 0");
            params.input_scale.push(1.0);
            params.constant_columns.push(d);
        }
    }
    Ok((params.apply(dataset)?, params))
}

/// Mean and population standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..m)
            .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
            .collect(),
    }
}
