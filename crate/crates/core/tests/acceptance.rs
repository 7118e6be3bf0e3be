// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.
//!
//! Set `GPCS_ACCEPTANCE=1,3,8` to run a subset.

use std::time::{Duration, Instant};

use faer::Mat;
use gpcs::data::mean_sd;
use gpcs::dense::{self, sym_eigvals, Cholesky};
use gpcs::inference::{exact_logdet, logdet_bound, term_spectra};
use gpcs::kron::{interp_weights, kron_eigvals, ScaledTerm};
use gpcs::prelude::*;
use gpcs::surface::{gpcs_operator, RksWarp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn selected(id: usize) -> bool {
    match std::env::var("GPCS_ACCEPTANCE") {
        Ok(v) if !v.trim().is_empty() => v
            .split(',')
            .any(|s| s.trim().trim_start_matches('C') == id.to_string()),
        _ => true,
    }
}

fn run(id: usize, budget_secs: u64, f: impl FnOnce() -> (bool, String)) -> Option<Outcome> {
    if !selected(id) {
        return None;
    }
    let t = Instant::now();
    let (pass, detail) = f();
    let elapsed = t.elapsed();
    let budget = Duration::from_secs(budget_secs);
    let o = Outcome {
        id,
        pass: pass && elapsed <= budget,
        detail,
        elapsed,
        budget,
    };
    println!(
        "C{} {} {} [{:.1}s of {}s]",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        o.elapsed.as_secs_f64(),
        o.budget.as_secs()
    );
    Some(o)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn surface_mse(fitted: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let same: f64 = fitted
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n;
    let flipped: f64 = fitted
        .iter()
        .zip(truth)
        .map(|(a, b)| (1.0 - a - b).powi(2))
        .sum::<f64>()
        / n;
    same.min(flipped)
}

fn oriented(s: Vec<f64>, truth: &[f64]) -> Vec<f64> {
    let same: f64 = s.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    let flipped: f64 = s
        .iter()
        .zip(truth)
        .map(|(a, b)| (1.0 - a - b).powi(2))
        .sum();
    if flipped < same {
        s.into_iter().map(|v| 1.0 - v).collect()
    } else {
        s
    }
}

fn random_psd(rng: &mut impl Rng, n: usize) -> Mat<f64> {
    let k = rng.random_range(1..=n);
    let a = Mat::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let scale = rng.random_range(0.1..10.0) / k as f64;
    Mat::from_fn(n, n, |i, j| {
        scale * (0..k).map(|c| a[(i, c)] * a[(j, c)]).sum::<f64>()
    })
}

fn c1() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0;
    let greedy = LogDetMethod::WeylGreedy { v: 80 };
    for inst in 0..200 {
        let n = [16, 64, 256][inst % 3];
        let r = 2 + (inst / 3) % 2;
        let noise = 10f64.powf(rng.random_range(-3.0..0.0));
        let mut total = Mat::<f64>::identity(n, n) * noise;
        let mut spectra = Vec::new();
        for _ in 0..r {
            let k = random_psd(&mut rng, n);
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let t = Mat::from_fn(n, n, |i, j| s[i] * k[(i, j)] * s[j]);
            total += &t;
            spectra.push(EigenList::new(sym_eigvals(&t).unwrap()));
        }
        let exact = Cholesky::new(&total, 0.0).unwrap().logdet();
        let we = logdet_bound(&spectra, noise, LogDetMethod::WeylExact).unwrap();
        let wg = logdet_bound(&spectra, noise, greedy).unwrap();
        let wm = logdet_bound(&spectra, noise, LogDetMethod::WeylMiddle).unwrap();
        let tol = 1e-9 * exact.abs().max(1.0);
        let mut ok = exact <= we + tol && we <= wg + tol && wg <= wm + tol;
        if r == 2 {
            ok &= exact <= logdet_bound(&spectra, noise, LogDetMethod::Fiedler).unwrap() + tol;
        }
        if !ok {
            violations += 1;
        }
    }
    (
        violations == 0,
        format!("bound validity: {violations} violations over 200 instances"),
    )
}

fn c2() -> (bool, String) {
    let grid = GridSpec::unit(2, 50).unwrap();
    let spec = SyntheticSpec::default();
    let k = &spec.kernels;
    let extra = Kernel::rbf(1.0, vec![0.1 * 0.1; 2]);
    let mut two = Vec::new();
    let mut three = Vec::new();
    let mut diag = Vec::new();
    for seed in 0..3u64 {
        let m2 = random_mixture_model(&spec, k.clone(), seed).unwrap();
        let m3 = random_mixture_model(&spec, vec![k[0].clone(), k[1].clone(), extra.clone()], seed)
            .unwrap();
        for (m, out) in [(&m2, &mut two), (&m3, &mut three)] {
            let op = gpcs_operator(m, &grid).unwrap();
            let exact = exact_logdet(&op).unwrap();
            let spectra = term_spectra(&op).unwrap();
            let mid = logdet_bound(&spectra, op.noise(), LogDetMethod::WeylMiddle).unwrap();
            let greedy =
                logdet_bound(&spectra, op.noise(), LogDetMethod::WeylGreedy { v: 80 }).unwrap();
            out.push(mid / exact);
            diag.push(greedy / exact);
        }
    }
    let in_range = |v: &[f64], lo: f64| v.iter().all(|r| (lo..=1.05).contains(r));
    let pass = in_range(&two, 0.7) && in_range(&three, 0.65);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|r| format!("{r:.3}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    (
        pass,
        format!(
            "weyl-middle/exact two-term [{}] (need 0.7..1.05), three-term [{}] (need 0.65..1.05); greedy(80) two/three interleaved [{}]",
            fmt(&two),
            fmt(&three),
            fmt(&diag)
        ),
    )
}

fn c3() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 4];
    for _ in 0..20 {
        let d = rng.random_range(1..=3);
        let sizes: Vec<usize> = (0..d)
            .map(|_| rng.random_range(2..=[60, 20, 12][d - 1]))
            .collect();
        let factors: Vec<Mat<f64>> = sizes.iter().map(|&m| random_psd(&mut rng, m)).collect();
        let km = KronMatrix::new(factors.clone()).unwrap();
        let dense_k = km.dense();
        let n = dense_k.nrows();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = km.matvec(&v).unwrap();
        let slow = dense::matvec(&dense_k, &v);
        let scale = dense::norm(&slow).max(1.0);
        for (a, b) in fast.iter().zip(&slow) {
            worst[0] = worst[0].max((a - b).abs() / scale);
        }
        let ke = kron_eigvals(&km).unwrap();
        let mut de = sym_eigvals(&dense_k).unwrap();
        de.sort_by(|a, b| b.total_cmp(a));
        let escale = de[0].abs().max(1.0);
        for (a, b) in ke.values().iter().zip(&de) {
            worst[1] = worst[1].max((a - b).abs() / escale);
        }
        let left: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let right: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let noise = rng.random_range(0.01..1.0);
        let op = ScaledKronSum::new(
            vec![ScaledTerm {
                left: left.clone(),
                kron: km.clone(),
                right: right.clone(),
            }],
            noise,
        )
        .unwrap();
        let od = op.dense();
        for i in 0..n {
            for j in 0..n {
                let want = left[i] * dense_k[(i, j)] * right[j] + if i == j { noise } else { 0.0 };
                worst[2] = worst[2].max((od[(i, j)] - want).abs() / escale);
            }
        }
    }
    for _ in 0..10 {
        let grid = GridSpec::uniform(
            &[(-1.0, 2.0), (0.0, 1.5)],
            &[rng.random_range(6..30), rng.random_range(6..30)],
        )
        .unwrap();
        let c: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cubic = |x: f64, y: f64| {
            (0..4)
                .flat_map(|a| (0..4).map(move |b| (a, b)))
                .map(|(a, b)| c[4 * a + b] * x.powi(a as i32) * y.powi(b as i32))
                .sum::<f64>()
        };
        let x = PointSet::new(
            2,
            (0..200)
                .flat_map(|_| [rng.random_range(-1.0..2.0), rng.random_range(0.0..1.5)])
                .collect(),
        )
        .unwrap();
        let w = interp_weights(&grid, &x).unwrap();
        let on_grid: Vec<f64> = grid.points().rows().map(|p| cubic(p[0], p[1])).collect();
        let approx = w.apply(&on_grid);
        for (i, p) in x.rows().enumerate() {
            worst[3] = worst[3].max((approx[i] - cubic(p[0], p[1])).abs());
        }
    }
    let tol = [1e-12, 1e-8, 1e-10, 1e-10];
    let pass = worst.iter().zip(&tol).all(|(w, t)| w <= t);
    (
        pass,
        format!(
            "kron matvec {:.1e} (≤1e-12), eigenvalues {:.1e} (≤1e-8), assembly {:.1e} (≤1e-10), cubic interpolation {:.1e} (≤1e-10)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

/// Standardize, initialize, fit on a stride subsample, then predict the
/// held-out points with every training point.
struct Pipeline {
    m1: usize,
    m2: usize,
    fit_points: usize,
    max_iter: usize,
}

struct PipelineResult {
    surface: Vec<f64>,
    nmse: f64,
}

impl Pipeline {
    fn run(&self, data: &Dataset, seed: u64, random: bool) -> PipelineResult {
        let (train_idx, test_idx) = holdout_split(data.len(), 0.2, seed).unwrap();
        let train = data.select(&train_idx).unwrap();
        let (std_train, params) = standardize(&train).unwrap();
        let cfg = InitConfig {
            m1: self.m1,
            m2: self.m2,
            ..Default::default()
        };
        let model = if random {
            random_init(&std_train, &cfg, seed).unwrap()
        } else {
            init_model(&std_train, &cfg, seed).unwrap()
        };
        let stride = (std_train.len() / self.fit_points).max(1);
        let idx: Vec<usize> = (0..std_train.len()).step_by(stride).collect();
        let sub = std_train.select(&idx).unwrap();
        let fc = FitConfig {
            restarts: 1,
            max_iter: self.max_iter,
            seed,
            ..Default::default()
        };
        let fitted = fit(&model, &sub, &fc).unwrap();
        let all = params.apply(data).unwrap();
        let surface = fitted.model.weights(all.inputs()).unwrap().swap_remove(0);
        let test = data.select(&test_idx).unwrap();
        let xt = params.transform_inputs(test.inputs()).unwrap();
        let p = predict(&fitted.model, &std_train, &xt).unwrap();
        let pred = params.inverse_responses(&p.mean);
        PipelineResult {
            surface,
            nmse: nmse(test.responses(), &pred, train.responses()).unwrap(),
        }
    }
}

const C4_PIPELINE: Pipeline = Pipeline {
    m1: 20,
    m2: 10,
    fit_points: 800,
    max_iter: 100,
};

fn c4() -> (bool, String) {
    let spec = SyntheticSpec::default();
    let mut rows = Vec::new();
    let mut pass = true;
    for seed in 0..5u64 {
        let (data, truth) = gen_gpcs_data(&spec, seed).unwrap();
        let r = C4_PIPELINE.run(&data, seed, false);
        let mse = surface_mse(&r.surface, &truth.surface);
        pass &= mse <= 0.05 && r.nmse <= 0.01;
        rows.push(format!("seed {seed}: mse {mse:.4} nmse {:.5}", r.nmse));
    }
    (
        pass,
        format!(
            "synthetic recovery (mse ≤ 0.05, nmse ≤ 0.01): {}",
            rows.join("; ")
        ),
    )
}

fn c5() -> (bool, String) {
    let spec = SyntheticSpec {
        grid: vec![20, 20],
        forced_surface: Some(0.0),
        ..Default::default()
    };
    let mut sds = Vec::new();
    for seed in 0..20u64 {
        let (data, _) = gen_gpcs_data(&spec, seed).unwrap();
        let (std_data, _) = standardize(&data).unwrap();
        let cfg = InitConfig {
            m1: 10,
            m2: 5,
            ..Default::default()
        };
        let model = init_model(&std_data, &cfg, seed).unwrap();
        let fc = FitConfig {
            restarts: 1,
            max_iter: 100,
            seed,
            ..Default::default()
        };
        let fitted = fit(&model, &std_data, &fc).unwrap();
        let s = fitted.model.weights(std_data.inputs()).unwrap();
        sds.push(mean_sd(&s[0]).1);
    }
    let good = sds.iter().filter(|&&s| s < 0.05).count();
    (
        good >= 15,
        format!(
            "occam: {good}/20 no-change runs with std[s1] < 0.05 (need ≥ 15); max std {:.4}",
            sds.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

fn c6() -> (bool, String) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/coal.csv");
    let data = load_csv(path, &CsvColumns::new(["year"], "count")).unwrap();
    let (std_data, params) = standardize(&data).unwrap();
    let best = (0..5u64)
        .map(|seed| {
            let model = init_model(&std_data, &InitConfig::default(), seed).unwrap();
            fit(
                &model,
                &std_data,
                &FitConfig {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap()
        })
        .min_by(|a, b| a.best_nll.total_cmp(&b.best_nll))
        .unwrap();
    let model = best
        .model
        .oriented_earliest_first(std_data.inputs(), 0)
        .unwrap();
    let sweep = SweepSpec {
        axis: 0,
        lo: 1851.0,
        hi: 1962.0,
        resolution: 1111,
        data_range: Some((1851.0, 1962.0)),
    };
    let s = change_summary(&model, Some(&params), &[vec![]], &sweep)
        .unwrap()
        .swap_remove(0);
    let pass = matches!(s.midpoint, Some(m) if (1885.0..=1896.0).contains(&m))
        && matches!(s.width, Some(w) if (1.0..=15.0).contains(&w));
    (
        pass,
        format!(
            "coal: midpoint {} (need 1885..1896), width {} (need 1..15), nll {:.3}",
            s.midpoint.map_or("none".into(), |m| format!("{m:.1}")),
            s.width.map_or("none".into(), |w| format!("{w:.1}")),
            best.best_nll
        ),
    )
}

fn c7() -> (bool, String) {
    let spec = SyntheticSpec {
        grid: vec![30, 30],
        ..Default::default()
    };
    let mut pass = true;
    let mut rows = Vec::new();
    let mut used = 0;
    for seed in 0.. {
        if used == 3 {
            break;
        }
        let (data, truth) = gen_gpcs_data(&spec, seed).unwrap();
        let s = &truth.surface;
        let hi: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 0.9).collect();
        let lo: Vec<usize> = (0..s.len()).filter(|&i| s[i] < 0.1).collect();
        if hi.is_empty() || lo.is_empty() {
            continue;
        }
        used += 1;
        let k = &spec.kernels;
        let model =
            ChangeSurfaceModel::two_regime(truth.warp(), k[0].clone(), k[1].clone(), spec.noise)
                .unwrap();
        let r = counterfactual_posterior(
            &model,
            &data,
            &CounterfactualRequest::marginals(data.inputs().clone()),
        )
        .unwrap();
        let mut cover = Vec::new();
        for (f, latent) in r.functions.iter().zip(&truth.latent) {
            let c = (0..data.len())
                .filter(|&i| (latent[i] - f.mean[i]).abs() <= 2.0 * f.var[i].sqrt())
                .count();
            cover.push(c as f64 / data.len() as f64);
        }
        let f1 = &r.functions[0];
        let avg = |idx: &[usize]| idx.iter().map(|&i| f1.var[i]).sum::<f64>() / idx.len() as f64;
        let (v_hi, v_lo) = (avg(&hi), avg(&lo));
        pass &= cover.iter().all(|&c| c >= 0.85) && v_hi < v_lo;
        rows.push(format!(
            "seed {seed}: coverage f1 {:.3} f2 {:.3}, var(f1) s1>0.9 {v_hi:.2e} vs s1<0.1 {v_lo:.2e}",
            cover[0], cover[1]
        ));
    }
    (pass, format!("counterfactual: {}", rows.join("; ")))
}

fn random_model(rng: &mut impl Rng, d: usize, background: bool) -> ChangeSurfaceModel {
    let m = rng.random_range(2..6);
    let warp = Warp::Rks(RksWarp {
        amplitudes: (0..m).map(|_| rng.random_range(-2.0..2.0)).collect(),
        frequencies: (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect(),
        phases: (0..m)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect(),
    });
    let kernel = |rng: &mut dyn rand::RngCore| {
        if rng.random_bool(0.5) {
            Kernel::rbf(
                rng.random_range(0.5..2.0),
                (0..d).map(|_| rng.random_range(0.01..0.3)).collect(),
            )
        } else {
            Kernel::SmProduct(SmProductParams {
                dims: (0..d)
                    .map(|_| {
                        let q = rng.random_range(1..3);
                        Sm1d {
                            weights: (0..q).map(|_| rng.random_range(0.3..1.5)).collect(),
                            means: (0..q).map(|_| rng.random_range(0.0..3.0)).collect(),
                            variances: (0..q).map(|_| rng.random_range(0.5..5.0)).collect(),
                        }
                    })
                    .collect(),
            })
        }
    };
    let k1 = kernel(rng);
    let k2 = kernel(rng);
    let noise = rng.random_range(0.01..0.3);
    if background {
        ChangeSurfaceModel::with_background(warp, k1, k2, noise).unwrap()
    } else {
        ChangeSurfaceModel::two_regime(warp, k1, k2, noise).unwrap()
    }
}

fn c8() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..20 {
        let d = rng.random_range(1..=2);
        let m = random_model(&mut rng, d, i % 4 == 3);
        let x =
            PointSet::new(d, (0..30 * d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let data = Dataset::new(x, (0..30).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (_, g) = exact_nll_grad(&m, &data).unwrap();
        let theta = m.pack();
        for p in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[p] += h;
            let mut tm = theta.clone();
            tm[p] -= h;
            let fd = (exact_nll(&m.unpack(&tp).unwrap(), &data).unwrap()
                - exact_nll(&m.unpack(&tm).unwrap(), &data).unwrap())
                / (2.0 * h);
            worst = worst.max((fd - g[p]).abs() / fd.abs().max(1e-2));
            checked += 1;
        }
    }
    (
        worst <= 1e-4,
        format!(
            "gradient check: worst relative error {worst:.2e} over {checked} parameters (≤1e-4)"
        ),
    )
}

fn c9() -> (bool, String) {
    let spec = SyntheticSpec {
        grid: vec![30, 30],
        ..Default::default()
    };
    let (data, truth) = gen_gpcs_data(&spec, 9).unwrap();
    let pipe = Pipeline {
        m1: 20,
        m2: 10,
        fit_points: 720,
        max_iter: 100,
    };
    let mut results = [Vec::new(), Vec::new()];
    for (k, random) in [false, true].into_iter().enumerate() {
        for seed in 0..10u64 {
            let r = pipe.run(&data, seed, random);
            results[k].push(oriented(r.surface, &truth.surface));
        }
    }
    let stats = |runs: &[Vec<f64>]| {
        let mses: Vec<f64> = runs
            .iter()
            .map(|s| surface_mse(s, &truth.surface))
            .collect();
        let n = truth.surface.len();
        let disp = (0..n)
            .map(|i| mean_sd(&runs.iter().map(|s| s[i]).collect::<Vec<_>>()).1)
            .sum::<f64>()
            / n as f64;
        (median(&mses), disp)
    };
    let (mi, di) = stats(&results[0]);
    let (mr, dr) = stats(&results[1]);
    (
        mi < mr && di < dr,
        format!("initialization: median surface mse {mi:.4} vs random {mr:.4}; mean per-point sd {di:.4} vs random {dr:.4}"),
    )
}

fn c10() -> (bool, String) {
    let spec = SyntheticSpec {
        grid: vec![64, 64],
        ..Default::default()
    };
    let (data, truth) = gen_gpcs_data(&spec, 10).unwrap();
    let k = &spec.kernels;
    let model =
        ChangeSurfaceModel::two_regime(truth.warp(), k[0].clone(), k[1].clone(), spec.noise)
            .unwrap();
    let mut rows = Vec::new();
    let mut times = Vec::new();
    let mut nlls = Vec::new();
    let mut converged = true;
    let cg = CgOptions {
        tol: 1e-6,
        max_iter: 5000,
    };
    for f in [1.0f64, 0.75, 0.5] {
        let side = (64.0 * f.sqrt()).round() as usize;
        let structure = if side == 64 {
            Structure::detect(&data, None).unwrap()
        } else {
            Structure::interp(&data, GridSpec::unit(2, side).unwrap()).unwrap()
        };
        let reps = 3;
        let t = Instant::now();
        let mut last = None;
        for _ in 0..reps {
            last =
                Some(approx_nll(&model, &data, &structure, LogDetMethod::WeylMiddle, cg).unwrap());
        }
        let per = t.elapsed().as_secs_f64() / reps as f64;
        let r = last.unwrap();
        converged &= r.cg_converged;
        rows.push(format!(
            "{:.0}% ({side}²): nll {:.2} in {per:.3}s, cg {}",
            f * 100.0,
            r.value,
            r.cg_iterations
        ));
        times.push(per);
        nlls.push(r.value);
    }
    let monotone = times.windows(2).all(|w| w[1] < w[0]);
    let dev = (nlls[1] - nlls[0]).abs() / nlls[0].abs();
    (
        monotone && converged && dev <= 0.05,
        format!(
            "kiss-gp: {}; deviation at 75% {:.2}% (≤5%)",
            rows.join("; "),
            dev * 100.0
        ),
    )
}

#[test]
fn acceptance() {
    println!();
    let outcomes: Vec<Outcome> = [
        run(1, 60, c1),
        run(2, 120, c2),
        run(3, 60, c3),
        run(4, 1800, c4),
        run(5, 1800, c5),
        run(6, 300, c6),
        run(7, 600, c7),
        run(8, 60, c8),
        run(9, 3600, c9),
        run(10, 600, c10),
    ]
    .into_iter()
    .flatten()
    .collect();
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("C{}", o.id))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
