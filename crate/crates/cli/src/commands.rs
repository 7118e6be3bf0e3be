// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use gpcs::counterfactual::function_names;
use gpcs::inference::{exact_logdet, logdet_bound, term_spectra, DENSE_LIMIT};
use gpcs::prelude::*;
use gpcs::surface::{gpcs_operator, sweep_curve};
use serde::Serialize;

use crate::config::{BenchConfig, Layer};
use crate::error::{usage, Result};
use crate::output::{
    axis_index, csv_header, fmt_f64, fmt_opt, sibling, write_json, ModelFile, Table, SCHEMA_VERSION,
};

fn input_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

fn row_values(x: &[f64]) -> Vec<String> {
    x.iter().map(|&v| fmt_f64(v)).collect()
}

pub fn simulate(layer: &Layer) -> Result<()> {
    let out = layer.require(&layer.out, "out")?;
    let spec = layer.simulate_spec()?;
    let seed = layer.seed();
    let counts = layer.counts.unwrap_or(false);
    let (data, truth) = if counts {
        gen_lgcp_data(&spec, seed)?
    } else {
        gen_gpcs_data(&spec, seed)?
    };
    let names = input_names(data.dim());
    let mut header = names.clone();
    header.push("y".into());
    let mut t = Table::create(out, &header)?;
    for (x, y) in data.inputs().rows().zip(data.responses()) {
        let mut row = row_values(x);
        row.push(fmt_f64(*y));
        t.row(&row)?;
    }
    t.finish()?;

    if let Some(path) = &layer.truth {
        let fnames = match truth.mode {
            SyntheticMode::Standard => ["f1", "f2"],
            SyntheticMode::Background => ["f0", "f1"],
        };
        let mut header = names;
        header.extend(["s1", fnames[0], fnames[1], "signal", "y"].map(String::from));
        let mut t = Table::create(path, &header)?;
        for (i, x) in data.inputs().rows().enumerate() {
            let mut row = row_values(x);
            row.extend(
                [
                    truth.surface[i],
                    truth.latent[0][i],
                    truth.latent[1][i],
                    truth.signal[i],
                    truth.y[i],
                ]
                .map(fmt_f64),
            );
            t.row(&row)?;
        }
        t.finish()?;
    }
    if truth.clamped {
        log::warn!("log intensities hit the clamp at {}", spec.latent_clamp);
    }
    println!("wrote {} points to {}", data.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    schema_version: u32,
    n_train: usize,
    n_fit: usize,
    n_test: usize,
    nmse: Option<f64>,
    init_nll: f64,
    fit: FitResult,
    summary: Option<Vec<ChangeSummary>>,
    elapsed_secs: f64,
}

pub fn fit_cmd(layer: &Layer) -> Result<()> {
    let start = Instant::now();
    let data_path = layer.require(&layer.data, "data")?;
    let out = layer.require(&layer.out, "out")?;
    let init_cfg = layer.init_config()?;
    let fit_cfg = layer.fit_config()?;
    let seed = layer.seed();

    let header = csv_header(data_path)?;
    let y_col = match &layer.y_col {
        Some(c) => c.clone(),
        None => header
            .last()
            .cloned()
            .ok_or_else(|| usage("data file has no columns"))?,
    };
    let x_cols: Vec<String> = match &layer.x_cols {
        Some(c) => c.clone(),
        None => header.iter().filter(|h| **h != y_col).cloned().collect(),
    };
    let data = load_csv(data_path, &CsvColumns::new(x_cols.clone(), y_col.clone()))?;

    let (train, test) = match layer.holdout {
        Some(f) => {
            let (tr, te) = holdout_split(data.len(), f, seed)?;
            (data.select(&tr)?, Some(data.select(&te)?))
        }
        None => (data, None),
    };
    let (std_train, params) = standardize(&train)?;
    let init = init_model(&std_train, &init_cfg, seed)?;
    let init_nll = exact_nll(&init, &std_train).unwrap_or(f64::NAN);

    let fit_data = match layer.fit_points {
        Some(0) => return Err(usage("fit_points must be >= 1")),
        Some(m) if m < std_train.len() => {
            let stride = std_train.len().div_ceil(m);
            let idx: Vec<usize> = (0..std_train.len()).step_by(stride).collect();
            std_train.select(&idx)?
        }
        _ => std_train.clone(),
    };
    let result = fit(&init, &fit_data, &fit_cfg)?;

    let sweep_axis = match &layer.sweep_axis {
        Some(a) => Some(axis_index(&x_cols, a)?),
        None if x_cols.len() == 1 => Some(0),
        None => None,
    };
    let model = match sweep_axis {
        Some(a) => result
            .model
            .oriented_earliest_first(std_train.inputs(), a)?,
        None => result.model.clone(),
    };
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        input_columns: x_cols.clone(),
        response_column: y_col,
        standardization: params.clone(),
        model,
        train,
    };
    crate::output::write_json(out, &file)?;

    let weights_path = layer
        .weights
        .clone()
        .unwrap_or_else(|| sibling(out, "weights.csv"));
    let s = file.model.weights(std_train.inputs())?;
    let mut header = x_cols.clone();
    header.extend((1..=s.len()).map(|i| format!("s{i}")));
    let mut t = Table::create(&weights_path, &header)?;
    for (i, x) in file.train.inputs().rows().enumerate() {
        let mut row = row_values(x);
        row.extend(s.iter().map(|si| fmt_f64(si[i])));
        t.row(&row)?;
    }
    t.finish()?;

    let nmse_value = match &test {
        Some(test) => {
            let xt = params.transform_inputs(test.inputs())?;
            let p = predict(&file.model, &std_train, &xt)?;
            let pred = params.inverse_responses(&p.mean);
            Some(nmse(test.responses(), &pred, file.train.responses())?)
        }
        None => None,
    };

    let summary = match sweep_axis {
        Some(axis) => {
            let (locations, sweep) = default_sweep(&file, axis, layer)?;
            Some(change_summary(
                &file.model,
                Some(&params),
                &locations,
                &sweep,
            )?)
        }
        None => None,
    };

    println!(
        "nll {:.6} after {} iterations ({} restarts)",
        result.best_nll,
        result.iterations,
        result.restart_nlls.len()
    );
    if let Some(v) = nmse_value {
        println!("held-out nmse {v:.6}");
    }
    if let Some(rows) = &summary {
        if let [one] = rows.as_slice() {
            println!(
                "midpoint {} width {}",
                one.midpoint.map_or("none".into(), |m| format!("{m:.3}")),
                one.width.map_or("none".into(), |w| format!("{w:.3}"))
            );
        }
    }
    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        n_train: std_train.len(),
        n_fit: fit_data.len(),
        n_test: test.as_ref().map_or(0, |t| t.len()),
        nmse: nmse_value,
        init_nll,
        fit: result,
        summary,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    let report_path = layer
        .report
        .clone()
        .unwrap_or_else(|| sibling(out, "fit.json"));
    write_json(&report_path, &report)
}

fn load_query(file: &ModelFile, path: &Path) -> Result<PointSet> {
    Ok(load_points_csv(path, &file.input_columns)?)
}

pub fn predict_cmd(layer: &Layer) -> Result<()> {
    let file = ModelFile::load(layer.require(&layer.model, "model")?)?;
    let query = load_query(&file, layer.require(&layer.query, "query")?)?;
    let out = layer.require(&layer.out, "out")?;
    let train = file.standardized_train()?;
    let xq = file.standardization.transform_inputs(&query)?;
    let p = predict(&file.model, &train, &xq)?;
    let st = &file.standardization;
    let mean = st.inverse_responses(&p.mean);
    let sd = st.inverse_sd(&p.latent_var.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
    let sd_obs = st.inverse_sd(&p.var.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
    let mut header = file.input_columns.clone();
    header.extend(["mean", "sd", "sd_obs"].map(String::from));
    let mut t = Table::create(out, &header)?;
    for (i, x) in query.rows().enumerate() {
        let mut row = row_values(x);
        row.extend([mean[i], sd[i], sd_obs[i]].map(fmt_f64));
        t.row(&row)?;
    }
    t.finish()
}

pub fn counterfactual_cmd(layer: &Layer) -> Result<()> {
    let file = ModelFile::load(layer.require(&layer.model, "model")?)?;
    let query = load_query(&file, layer.require(&layer.query, "query")?)?;
    let out = layer.require(&layer.out, "out")?;
    let names = function_names(&file.model);
    let functions: Vec<usize> = match &layer.functions {
        Some(list) => list
            .iter()
            .map(|f| {
                names.iter().position(|n| n == f).ok_or_else(|| {
                    usage(format!("unknown function {f:?}; this model has {names:?}"))
                })
            })
            .collect::<Result<_>>()?,
        None => vec![0, 1],
    };
    let train = file.standardized_train()?;
    let xq = file.standardization.transform_inputs(&query)?;
    let request = CounterfactualRequest {
        functions,
        ..CounterfactualRequest::marginals(xq.clone())
    };
    let r = counterfactual_posterior(&file.model, &train, &request)?;
    let s = file.model.weights(&xq)?;
    let st = &file.standardization;
    let mut header = file.input_columns.clone();
    header.push("s1".into());
    let mut columns = Vec::new();
    for f in &r.functions {
        header.push(format!("{}_mean", f.name));
        header.push(format!("{}_sd", f.name));
        // The background's switched-on function carries no offset.
        let mean = if file.model.is_background() && f.name == "f1" {
            st.inverse_sd(&f.mean)
        } else {
            st.inverse_responses(&f.mean)
        };
        columns.push((mean, st.inverse_sd(&f.sd())));
    }
    let mut t = Table::create(out, &header)?;
    for (i, x) in query.rows().enumerate() {
        let mut row = row_values(x);
        row.push(fmt_f64(s[0][i]));
        for (m, sd) in &columns {
            row.push(fmt_f64(m[i]));
            row.push(fmt_f64(sd[i]));
        }
        t.row(&row)?;
    }
    t.finish()
}

/// Locations on the non-sweep axes and the sweep itself, both in
/// original units.
fn default_sweep(
    file: &ModelFile,
    axis: usize,
    layer: &Layer,
) -> Result<(Vec<Vec<f64>>, SweepSpec)> {
    let x = file.train.inputs();
    let col = x.column(axis);
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let locations = match &layer.locations {
        Some(path) => {
            let others: Vec<String> = file
                .input_columns
                .iter()
                .enumerate()
                .filter(|&(d, _)| d != axis)
                .map(|(_, c)| c.clone())
                .collect();
            if others.is_empty() {
                vec![Vec::new()]
            } else {
                load_points_csv(path, &others)?
                    .rows()
                    .map(|r| r.to_vec())
                    .collect()
            }
        }
        None => {
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            for row in x.rows() {
                let loc: Vec<f64> = row
                    .iter()
                    .enumerate()
                    .filter(|&(d, _)| d != axis)
                    .map(|(_, v)| *v)
                    .collect();
                if seen.insert(loc.iter().map(|v| v.to_bits()).collect::<Vec<_>>()) {
                    out.push(loc);
                }
            }
            out
        }
    };
    let sweep = SweepSpec {
        axis,
        lo: layer.sweep_lo.unwrap_or(lo),
        hi: layer.sweep_hi.unwrap_or(hi),
        resolution: layer.resolution.unwrap_or(1000),
        data_range: Some((lo, hi)),
    };
    Ok((locations, sweep))
}

pub fn summarize(layer: &Layer) -> Result<()> {
    let file = ModelFile::load(layer.require(&layer.model, "model")?)?;
    let out = layer.require(&layer.out, "out")?;
    let axis = file.axis_index(layer.sweep_axis.as_deref().unwrap_or("0"))?;
    let (locations, sweep) = default_sweep(&file, axis, layer)?;
    let st = &file.standardization;
    let rows = change_summary(&file.model, Some(st), &locations, &sweep)?;

    let others: Vec<String> = file
        .input_columns
        .iter()
        .enumerate()
        .filter(|&(d, _)| d != axis)
        .map(|(_, c)| c.clone())
        .collect();
    let mut header = others.clone();
    header.extend(["midpoint", "width", "slope", "crossing", "extrapolated"].map(String::from));
    let mut t = Table::create(out, &header)?;
    for r in &rows {
        let mut row = row_values(&r.location);
        row.extend([fmt_opt(r.midpoint), fmt_opt(r.width), fmt_opt(r.slope)]);
        row.push(r.has_crossing().to_string());
        row.push(r.extrapolated.to_string());
        t.row(&row)?;
    }
    t.finish()?;

    let curve_path = layer
        .curve
        .clone()
        .unwrap_or_else(|| sibling(out, "curve.csv"));
    let mut header = others;
    header.push(file.input_columns[axis].clone());
    header.push("s1".into());
    let mut t = Table::create(&curve_path, &header)?;
    for loc in &locations {
        for (coord, s) in sweep_curve(&file.model, Some(st), loc, &sweep)? {
            let mut row = row_values(loc);
            row.push(fmt_f64(coord));
            row.push(fmt_f64(s));
            t.row(&row)?;
        }
    }
    t.finish()?;
    let crossings = rows.iter().filter(|r| r.has_crossing()).count();
    println!("{} locations, {crossings} with a 0.5 crossing", rows.len());
    Ok(())
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64()))
}

pub fn benchmark_logdet(layer: &Layer) -> Result<()> {
    let out = layer.require(&layer.out, "out")?;
    let cfg: BenchConfig = layer.bench_config()?;
    let spec = layer.simulate_spec()?;
    let extra = [
        Kernel::rbf(1.0, vec![0.1 * 0.1; 2]),
        Kernel::rbf(1.0, vec![0.35 * 0.35; 2]),
    ];
    let header: Vec<String> = [
        "n",
        "terms",
        "seed",
        "exact",
        "fiedler",
        "weyl_exact",
        "weyl_middle",
        "weyl_greedy",
        "ratio_fiedler",
        "ratio_weyl_exact",
        "ratio_weyl_middle",
        "ratio_weyl_greedy",
        "secs_exact",
        "secs_spectra",
        "secs_fiedler",
        "secs_weyl_exact",
        "secs_weyl_middle",
        "secs_weyl_greedy",
    ]
    .map(String::from)
    .to_vec();
    let mut t = Table::create(out, &header)?;
    for &size in &cfg.sizes {
        let side = (size as f64).sqrt().round().max(2.0) as usize;
        let grid = GridSpec::unit(2, side)?;
        let n = grid.len();
        for &terms in &cfg.terms {
            let mut kernels = spec.kernels[..2].to_vec();
            kernels.extend(extra[..terms - 2].iter().cloned());
            for seed in 0..cfg.seeds as u64 {
                let model = random_mixture_model(&spec, kernels.clone(), seed)?;
                let op = gpcs_operator(&model, &grid)?;
                let noise = op.noise();
                let exact = if n <= DENSE_LIMIT {
                    Some(timed(|| Ok(exact_logdet(&op)?))?)
                } else {
                    None
                };
                let (spectra, secs_spectra) = timed(|| Ok(term_spectra(&op)?))?;
                let bound = |m: LogDetMethod| timed(|| Ok(logdet_bound(&spectra, noise, m)?));
                let fiedler = if terms == 2 {
                    Some(bound(LogDetMethod::Fiedler)?)
                } else {
                    None
                };
                let we = bound(LogDetMethod::WeylExact)?;
                let wm = bound(LogDetMethod::WeylMiddle)?;
                let wg = bound(LogDetMethod::WeylGreedy { v: cfg.greedy_v })?;
                let ex = exact.map(|e| e.0);
                let ratio = |v: f64| ex.map(|e| v / e);
                let mut row = vec![n.to_string(), terms.to_string(), seed.to_string()];
                row.extend([
                    fmt_opt(ex),
                    fmt_opt(fiedler.map(|f| f.0)),
                    fmt_f64(we.0),
                    fmt_f64(wm.0),
                    fmt_f64(wg.0),
                    fmt_opt(fiedler.and_then(|f| ratio(f.0))),
                    fmt_opt(ratio(we.0)),
                    fmt_opt(ratio(wm.0)),
                    fmt_opt(ratio(wg.0)),
                    fmt_opt(exact.map(|e| e.1)),
                    fmt_f64(secs_spectra),
                    fmt_opt(fiedler.map(|f| f.1)),
                    fmt_f64(we.1),
                    fmt_f64(wm.1),
                    fmt_f64(wg.1),
                ]);
                t.row(&row)?;
                println!(
                    "n {n} terms {terms} seed {seed}: middle ratio {}",
                    ratio(wm.0).map_or("n/a".into(), |r| format!("{r:.3}"))
                );
            }
        }
    }
    t.finish()
}
