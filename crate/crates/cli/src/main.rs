// SPDX-License-Identifier: MIT OR Apache-2.0

//! `gpcs`: simulate, fit, predict, counterfactual, summarize and
//! benchmark-logdet for Gaussian process change surfaces.
//!
//! Every flag can also be given in a JSON file passed with `--config`;
//! flags win over the file. Exit codes: 0 success, 1 numeric failure,
//! 2 usage or validation error.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpcs::prelude::{KernelFamily, LogDetMethod, ModelForm, SyntheticMode};

use crate::config::Layer;
use crate::error::Result;

#[derive(Parser, Debug)]
#[command(name = "gpcs", version, about = "Gaussian process change surfaces")]
struct Cli {
    /// JSON file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a seeded synthetic dataset on a grid.
    Simulate(SimulateArgs),
    /// Initialize and fit a change-surface model to CSV data.
    Fit(FitArgs),
    /// Predictive mean and standard deviation at query points.
    Predict(QueryArgs),
    /// Posterior of each latent function at query points.
    Counterfactual(CounterfactualArgs),
    /// Midpoint, width and slope of the change along one axis.
    Summarize(SummarizeArgs),
    /// Compare log-determinant bounds with the exact value.
    BenchmarkLogdet(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormArg {
    Standard,
    Background,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Sm,
    Rbf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Output CSV with columns x0.., y.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV with the true surface and latent functions.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Grid sizes per axis, e.g. `50,50`.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Noise variance.
    #[arg(long)]
    noise: Option<f64>,
    /// Degree of the polynomial warp.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<FormArg>,
    /// Poisson counts with log intensity given by the mixture.
    #[arg(long)]
    counts: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Training CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output model JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit report JSON (default: next to --out).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-point weights CSV (default: next to --out).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Input columns (default: every column except the response).
    #[arg(long, value_delimiter = ',')]
    x_cols: Option<Vec<String>>,
    /// Response column (default: the last column).
    #[arg(long)]
    y_col: Option<String>,
    #[arg(long, value_enum)]
    form: Option<FormArg>,
    /// Number of regimes.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Spectral mixture components per dimension.
    #[arg(long)]
    q: Option<usize>,
    /// Warp draws during initialization.
    #[arg(long)]
    m1: Option<usize>,
    /// Kernel draws per warp draw.
    #[arg(long)]
    m2: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// exact, fiedler, weyl-exact, weyl-middle or weyl-greedy[:v].
    #[arg(long)]
    logdet: Option<LogDetMethod>,
    /// Latent grid sizes for the bound path, e.g. `40,40`.
    #[arg(long, value_delimiter = ',')]
    latent_grid: Option<Vec<usize>>,
    /// Cap on the points used by the final optimization.
    #[arg(long)]
    fit_points: Option<usize>,
    /// Fraction held out to report NMSE.
    #[arg(long)]
    holdout: Option<f64>,
    /// Axis (name or index) for the midpoint summary in the report.
    #[arg(long)]
    sweep_axis: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// CSV with the model's input columns.
    #[arg(long)]
    query: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CounterfactualArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Functions to report (default: both).
    #[arg(long, value_delimiter = ',')]
    functions: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Summary CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format curve CSV (default: next to --out).
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Sweep axis, by name or index (default 0).
    #[arg(long)]
    axis: Option<String>,
    /// CSV of locations on the other axes (default: those in the data).
    #[arg(long)]
    locations: Option<PathBuf>,
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    /// Samples along the sweep (at least 100).
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Point counts, each rounded to a square grid.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Numbers of additive terms.
    #[arg(long, value_delimiter = ',')]
    terms: Option<Vec<usize>>,
    #[arg(long)]
    seeds: Option<usize>,
    /// Window of the greedy search.
    #[arg(long)]
    greedy_v: Option<usize>,
    /// Noise variance.
    #[arg(long)]
    noise: Option<f64>,
}

fn form(f: FormArg) -> ModelForm {
    match f {
        FormArg::Standard => ModelForm::Standard,
        FormArg::Background => ModelForm::Background,
    }
}

fn mode(f: FormArg) -> SyntheticMode {
    match f {
        FormArg::Standard => SyntheticMode::Standard,
        FormArg::Background => SyntheticMode::Background,
    }
}

impl Command {
    /// The flags as a settings layer.
    fn layer(&self) -> Layer {
        match self {
            Command::Simulate(a) => Layer {
                out: a.out.clone(),
                truth: a.truth.clone(),
                grid: a.grid.clone(),
                noise: a.noise,
                degree: a.degree,
                mode: a.mode.map(mode),
                counts: a.counts.then_some(true),
                seed: a.seed,
                ..Layer::default()
            },
            Command::Fit(a) => Layer {
                data: a.data.clone(),
                out: a.out.clone(),
                report: a.report.clone(),
                weights: a.weights.clone(),
                x_cols: a.x_cols.clone(),
                y_col: a.y_col.clone(),
                form: a.form.map(form),
                r: a.r,
                family: a.family.map(|f| match f {
                    FamilyArg::Sm => KernelFamily::SpectralMixture,
                    FamilyArg::Rbf => KernelFamily::Rbf,
                }),
                q: a.q,
                m1: a.m1,
                m2: a.m2,
                restarts: a.restarts,
                max_iter: a.max_iter,
                logdet: a.logdet,
                latent_grid: a.latent_grid.clone(),
                fit_points: a.fit_points,
                holdout: a.holdout,
                sweep_axis: a.sweep_axis.clone(),
                seed: a.seed,
                ..Layer::default()
            },
            Command::Predict(a) => query_layer(a),
            Command::Counterfactual(a) => Layer {
                functions: a.functions.clone(),
                ..query_layer(&a.query)
            },
            Command::Summarize(a) => Layer {
                model: a.model.clone(),
                out: a.out.clone(),
                curve: a.curve.clone(),
                sweep_axis: a.axis.clone(),
                locations: a.locations.clone(),
                sweep_lo: a.lo,
                sweep_hi: a.hi,
                resolution: a.resolution,
                ..Layer::default()
            },
            Command::BenchmarkLogdet(a) => Layer {
                out: a.out.clone(),
                sizes: a.sizes.clone(),
                terms: a.terms.clone(),
                seeds: a.seeds,
                greedy_v: a.greedy_v,
                noise: a.noise,
                ..Layer::default()
            },
        }
    }
}

fn query_layer(a: &QueryArgs) -> Layer {
    Layer {
        model: a.model.clone(),
        query: a.query.clone(),
        out: a.out.clone(),
        ..Layer::default()
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => Layer::from_file(path)?,
        None => Layer::default(),
    };
    let layer = file.overlay(cli.command.layer());
    match cli.command {
        Command::Simulate(_) => commands::simulate(&layer),
        Command::Fit(_) => commands::fit_cmd(&layer),
        Command::Predict(_) => commands::predict_cmd(&layer),
        Command::Counterfactual(_) => commands::counterfactual_cmd(&layer),
        Command::Summarize(_) => commands::summarize(&layer),
        Command::BenchmarkLogdet(_) => commands::benchmark_logdet(&layer),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
