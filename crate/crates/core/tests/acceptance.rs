//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=3,5 cargo test --test acceptance` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rescap::baselines::VolTransform;
use rescap::capacity::{
    capacity, epsilon_autocovariance, epsilon_mean, filter_task_cov, linear_task_cov, linear_task_variance,
    quadratic_task_cov, quadratic_task_moments, simulate_model_recursion, state_autocovariance0, state_mean,
    task_capacity, ReservoirModel, TaskSpec, TruncationPolicy,
};
use rescap::experiment::{
    benchmark, surface, ExperimentConfig, METHOD_KALMAN, METHOD_RC, MODE_EMPIRICAL, MODE_MODEL,
};
use rescap::generators::{arma_aggregate_msfe, arma_aggregate_target, arma_simulate, arsv_simulate, AggregationVector, ArmaModel, ArsvModel};
use rescap::linalg;
use rescap::properties::{check_fading_memory, check_separation, contraction_violation, SpProbe, System, UfmProbe};
use rescap::series::{
    estimate_comoments, gaussian_automoment, AutomomentProvider, ComomentTable, GaussianMoments, IidMoments, MomentSpec,
    SampleMoments, TimeSeries,
};
use rescap::tdr::{evaluate_nmse, generate_mask, run_reservoir, solve_fixed_point, Ikeda, InputPolynomials, KernelSpec, RidgeProblem, StatePath, TdrParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("moment formulas vs Monte Carlo", moment_suite),
        ("closed-form capacity vs ridge on model path", capacity_consistency),
        ("volatility table ordering", table_ordering),
        ("error-surface argmin agreement", surface_argmin),
        ("ARSV variance and kurtosis", arsv_moments),
        ("ARMA aggregate MSFE", arma_msfe),
        ("property suite", property_suite),
        ("CLI replay determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {id} [{name}]: {} ({:.1}s) {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

/// Mean and batch-means standard error with 50 batches.
fn batch_mean_se(x: &[f64]) -> (f64, f64) {
    let b = 50;
    let len = x.len() / b;
    let means: Vec<f64> = (0..b).map(|k| x[k * len..(k + 1) * len].iter().sum::<f64>() / len as f64).collect();
    let m = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1) as f64;
    (m, (var / b as f64).sqrt())
}

struct Check {
    name: String,
    formula: f64,
    mc: f64,
    se: f64,
}

impl Check {
    fn new(name: impl Into<String>, formula: f64, samples: &[f64]) -> Self {
        let (mc, se) = batch_mean_se(samples);
        Self { name: name.into(), formula, mc, se }
    }

    fn z(&self) -> f64 {
        (self.mc - self.formula).abs() / self.se
    }
}

fn summarize(checks: &[Check], limit: f64) -> Outcome {
    let worst = checks.iter().max_by(|a, b| a.z().total_cmp(&b.z())).expect("checks");
    let bad: Vec<String> = checks
        .iter()
        .filter(|c| !(c.z() <= limit))
        .map(|c| format!("{} formula {:.6e} mc {:.6e} se {:.2e}", c.name, c.formula, c.mc, c.se))
        .collect();
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{} checks, worst |z| = {:.2} ({}){}",
            checks.len(),
            worst.z(),
            worst.name,
            if bad.is_empty() { String::new() } else { format!("; outside {limit} se: {}", bad.join("; ")) }
        ),
    }
}

fn fixture_model(n: usize, r: u32, rho: f64, seed: u64) -> ReservoirModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let a = &a * (rho / linalg::spectral_radius(&a));
    let p = DMatrix::from_fn(n, r as usize, |_, c| rng.random_range(-1.0..1.0) / (c + 1) as f64);
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    ReservoirModel::new(x0, a, InputPolynomials::from_matrix(p)).expect("stable fixture")
}

fn unit_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let norm = v.norm();
    v / norm
}

enum InputLaw {
    Ar1Gaussian { mean: f64, phi: f64, sigma2: f64 },
    IidUniform { half_width: f64 },
}

impl InputLaw {
    fn name(&self) -> &'static str {
        match self {
            InputLaw::Ar1Gaussian { .. } => "ar1-gaussian",
            InputLaw::IidUniform { .. } => "iid-uniform",
        }
    }

    fn provider(&self) -> Box<dyn AutomomentProvider> {
        match *self {
            InputLaw::Ar1Gaussian { mean, phi, sigma2 } => Box::new(GaussianMoments::ar1(mean, phi, sigma2)),
            InputLaw::IidUniform { half_width } => Box::new(IidMoments::uniform(half_width, 20)),
        }
    }

    fn sample(&self, len: usize, seed: u64) -> TimeSeries {
        match *self {
            InputLaw::Ar1Gaussian { mean, phi, sigma2 } => {
                let m = ArmaModel::new(vec![phi], vec![], sigma2).unwrap();
                arma_simulate(&m, len, seed, None).unwrap().0.map(|v| v + mean).unwrap()
            }
            InputLaw::IidUniform { half_width } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                TimeSeries::from_values((0..len).map(|_| rng.random_range(-half_width..=half_width)).collect()).unwrap()
            }
        }
    }
}

fn input_laws() -> [InputLaw; 2] {
    [InputLaw::Ar1Gaussian { mean: 0.2, phi: 0.5, sigma2: 0.36 }, InputLaw::IidUniform { half_width: 1.0 }]
}

/// Comoments of `y(t) = z(t-1)²` against the input, from exact automoments.
fn lagged_square_comoments(moments: &dyn AutomomentProvider, order: u32, lags: i64) -> ComomentTable {
    let m2 = moments.moment(&MomentSpec::single(2)).unwrap();
    let m4 = moments.moment(&MomentSpec::single(4)).unwrap();
    let input: Vec<f64> = (1..=order).map(|r| moments.moment(&MomentSpec::single(r)).unwrap()).collect();
    ComomentTable::from_fn(order, (-lags, 0), m2, m4 - m2 * m2, input, |r, h| {
        moments.moment(&MomentSpec::pair(2, r, h + 1)).unwrap()
    })
    .unwrap()
}

// ---------------------------------------------------------------------------
// 1. moment formulas vs Monte Carlo
// ---------------------------------------------------------------------------

fn moment_suite() -> Outcome {
    let policy = TruncationPolicy::default();
    let len = 400_000;
    let burn = 200;
    let mut checks = Vec::new();
    let mut seed = 100;
    for law in input_laws() {
        let moments = law.provider();
        let m = moments.as_ref();
        for r in [1u32, 2, 4] {
            for n in [3usize, 10] {
                seed += 1;
                let tag = format!("{}/R={r}/N={n}", law.name());
                let model = fixture_model(n, r, 0.6, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
                let (u, v) = (unit_vector(n, &mut rng), unit_vector(n, &mut rng));
                let z = law.sample(len, seed + 2000);
                let x = simulate_model_recursion(&model, &z).unwrap();
                let zv = z.values();

                let mu_eps = epsilon_mean(&model, m).unwrap();
                let g1 = epsilon_autocovariance(&model, m, 1).unwrap();
                let mu_x = state_mean(&model, m).unwrap();
                let gamma0 = state_autocovariance0(&model, m, &policy).unwrap().value;

                let eps: Vec<DVector<f64>> = zv.iter().map(|&zt| model.epsilon(zt)).collect();
                let xu: Vec<f64> = (0..len).map(|k| u.dot(&DVector::from_column_slice(x.row(k)))).collect();
                let xv: Vec<f64> = (0..len).map(|k| v.dot(&DVector::from_column_slice(x.row(k)))).collect();
                let (mxu, mxv) = (u.dot(&mu_x), v.dot(&mu_x));
                let range = burn..len - 2;

                checks.push(Check::new(format!("{tag} eps mean"), u.dot(&mu_eps), &range.clone().map(|k| u.dot(&eps[k])).collect::<Vec<_>>()));
                checks.push(Check::new(
                    format!("{tag} eps acov(1)"),
                    (u.transpose() * &g1 * &v)[(0, 0)],
                    &range.clone().map(|k| u.dot(&(&eps[k] - &mu_eps)) * v.dot(&(&eps[k + 1] - &mu_eps))).collect::<Vec<_>>(),
                ));
                checks.push(Check::new(format!("{tag} state mean"), mxu, &xu[burn..]));
                checks.push(Check::new(
                    format!("{tag} gamma0"),
                    (u.transpose() * &gamma0 * &v)[(0, 0)],
                    &range.clone().map(|k| (xu[k] - mxu) * (xv[k] - mxv)).collect::<Vec<_>>(),
                ));

                // Linear task with one step ahead and two of memory.
                let l = [0.7, -0.4, 0.3, 0.5];
                let cov = linear_task_cov(&model, m, &l, 1, 2, &policy).unwrap().value;
                let mu_z = m.moment(&MomentSpec::single(1)).unwrap();
                let mu_y = mu_z * l.iter().sum::<f64>();
                let y_lin = |k: usize| (0..4).map(|j| l[j] * zv[k + 1 - j]).sum::<f64>();
                checks.push(Check::new(
                    format!("{tag} linear cov"),
                    u.dot(&cov),
                    &range.clone().map(|k| (y_lin(k) - mu_y) * (xu[k] - mxu)).collect::<Vec<_>>(),
                ));

                // Quadratic task with one step ahead and one of memory.
                let q = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, -0.1, 0.2, -0.3, 0.4, -0.1, 0.4, 0.6]);
                let (qmean, _) = quadratic_task_moments(m, &q).unwrap();
                let (qvar, qcov) = quadratic_task_cov(&model, m, &q, 1, 1, &policy).unwrap();
                let y_quad = |k: usize| {
                    let w = [zv[k + 1], zv[k], zv[k - 1]];
                    (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| q[(i, j)] * w[i] * w[j]).sum::<f64>()
                };
                checks.push(Check::new(
                    format!("{tag} quadratic var"),
                    qvar,
                    &range.clone().map(|k| (y_quad(k) - qmean).powi(2)).collect::<Vec<_>>(),
                ));
                checks.push(Check::new(
                    format!("{tag} quadratic cov"),
                    u.dot(&qcov.value),
                    &range.clone().map(|k| (y_quad(k) - qmean) * (xu[k] - mxu)).collect::<Vec<_>>(),
                ));

                // Filter task y(t) = z(t-1)².
                let com = lagged_square_comoments(m, r, 40);
                let fcov = filter_task_cov(&model, &com, mu_z, &mu_eps, &policy, false).unwrap().value;
                let fmean = com.mean_y();
                checks.push(Check::new(
                    format!("{tag} filter cov"),
                    u.dot(&fcov),
                    &range.clone().map(|k| (zv[k - 1].powi(2) - fmean) * (xu[k] - mxu)).collect::<Vec<_>>(),
                ));
            }
        }
    }
    summarize(&checks, 3.0)
}

// ---------------------------------------------------------------------------
// 2. closed-form capacity vs ridge on a model path
// ---------------------------------------------------------------------------

/// Ridge NMSE on the training window and on the remaining test window.
fn split_nmse(states: &StatePath, target: &TimeSeries, washout: usize, train: usize, lambda_rel: f64) -> (f64, f64) {
    let tr = states.window(washout as i64, (washout + train) as i64 - 1).unwrap();
    let te = states.window((washout + train) as i64, states.end()).unwrap();
    let p = RidgeProblem::from_samples(&tr, target, 0).unwrap();
    let lambda = lambda_rel * p.gamma.trace() / p.gamma.nrows() as f64;
    let w = p.solve(lambda).unwrap();
    (evaluate_nmse(&tr, &w, target).unwrap(), evaluate_nmse(&te, &w, target).unwrap())
}

fn capacity_consistency() -> Outcome {
    let policy = TruncationPolicy::default();
    let (washout, train, test) = (500, 200_000, 100_000);
    let total = washout + train + test;

    // Memory task y(t) = z(t-1) for a random model under uniform input.
    let model = fixture_model(10, 2, 0.8, 7);
    let law = InputLaw::IidUniform { half_width: 1.0 };
    let z = law.sample(total, 8);
    let x = simulate_model_recursion(&model, &z).unwrap();
    let target = TimeSeries::new(z.values()[..total - 1].to_vec(), 1).unwrap();
    let task = TaskSpec::Linear { l: vec![0.0, 1.0], f: 0, h: 1 };
    let closed = task_capacity(&model, law.provider().as_ref(), &task, &policy, 0.0).unwrap().capacity;
    let empirical = 1.0 - split_nmse(&x, &target, washout, train, 0.0).1;
    let gap_memory = (closed - empirical).abs();

    // Volatility filtering with the linearized benchmark reservoir.
    let params = TdrParams::new(0.839, KernelSpec::Ikeda(Ikeda::BENCHMARK), generate_mask(40, 7)).unwrap();
    let vmodel = ReservoirModel::from_tdr(&params, 8).unwrap();
    let path = arsv_simulate(&ArsvModel::benchmark(), total, 9, None).unwrap();
    let xv = simulate_model_recursion(&vmodel, &path.z).unwrap();
    let ztrain = path.z.window(washout as i64, (washout + train) as i64 - 1).unwrap();
    let moments = SampleMoments::new(&ztrain, 20).unwrap();
    let com = estimate_comoments(&path.sigma, &ztrain, 8, (-20, 0)).unwrap();
    let lambda_rel = 1e-8;
    let tm = rescap::capacity::task_moments(&vmodel, &moments, &TaskSpec::Filter { comoments: com, center_on_input_mean: false }, &policy).unwrap();
    let closed_v = tm.capacity(lambda_rel * tm.state_scale()).unwrap().capacity;
    // The closed form uses moments of the training window, so the matching
    // empirical quantity is the in-sample fit there. Degree-8 input powers
    // under heavy tails make the out-of-sample figure an extrapolation.
    let (nmse_in, nmse_out) = split_nmse(&xv, &path.sigma, washout, train, lambda_rel);
    let empirical_v = 1.0 - nmse_in;
    let gap_vol = (closed_v - empirical_v).abs();
    Outcome {
        pass: gap_memory <= 0.02 && gap_vol <= 0.02,
        detail: format!(
            "memory: closed {closed:.4} vs ridge {empirical:.4} (gap {gap_memory:.4}); volatility: closed {closed_v:.4} vs in-sample ridge {empirical_v:.4} (gap {gap_vol:.4}, out-of-sample {:.4}); tolerance 0.02",
            1.0 - nmse_out
        ),
    }
}

// ---------------------------------------------------------------------------
// 3. volatility table ordering
// ---------------------------------------------------------------------------

fn load_config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn table_ordering() -> Outcome {
    let cfg = load_config("table1.json");
    let reps = cfg.benchmark.map_or(1, |b| b.replicates);
    let result = benchmark(&cfg).unwrap();
    let med = &result.summary.median;
    let rc_vol = med[METHOD_RC]["vol"];
    let kf_vol = med[METHOD_KALMAN]["vol"];
    let kf_logvar = med[METHOD_KALMAN]["log_var"];
    let log_gap = result
        .rows_for(METHOD_KALMAN)
        .iter()
        .map(|r| (r.get(VolTransform::LogHalf) - r.get(VolTransform::Identity)).abs())
        .fold(0.0, f64::max);
    let checks = [
        reps >= 10,
        (0.35..=0.55).contains(&rc_vol),
        rc_vol < kf_vol,
        (0.35..=0.50).contains(&kf_logvar),
        log_gap <= 1e-12,
    ];
    Outcome {
        pass: checks.iter().all(|&c| c),
        detail: format!(
            "{reps} seeds: median RC vol {rc_vol:.3} (target [0.35, 0.55], below Kalman vol {kf_vol:.3}); Kalman log-var {kf_logvar:.3} (target [0.35, 0.50]); Kalman log columns differ by {log_gap:.1e}"
        ),
    }
}

// ---------------------------------------------------------------------------
// 4. error-surface argmin agreement
// ---------------------------------------------------------------------------

fn surface_argmin() -> Outcome {
    let cfg = load_config("fig1.json");
    let grid = cfg.surface.as_ref().unwrap();
    let shape_ok = grid.axes.len() == 2 && grid.axes.iter().all(|a| a.steps == 20);
    let result = surface(&cfg).unwrap();
    let s = &result.summary;
    let (e, m) = (&s.argmin[MODE_EMPIRICAL], &s.argmin[MODE_MODEL]);
    let dist = s.argmin_distance.unwrap();
    Outcome {
        pass: shape_ok && dist <= 1 && s.failures.is_empty(),
        detail: format!(
            "empirical argmin (eta {:.3}, d {:.3}) = {:.4}; model argmin (eta {:.3}, d {:.3}) = {:.4}; Chebyshev distance {dist} (limit 1); {} failed cells",
            e.axis1,
            e.axis2.unwrap(),
            e.value,
            m.axis1,
            m.axis2.unwrap(),
            m.value,
            s.failures.len()
        ),
    }
}

// ---------------------------------------------------------------------------
// 5. ARSV variance and kurtosis
// ---------------------------------------------------------------------------

fn arsv_moments() -> Outcome {
    let model = ArsvModel::benchmark();
    let path = arsv_simulate(&model, 10_000_000, 5, None).unwrap();
    let z = path.z.values();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &v in z {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    let kurt = m4 / (m2 * m2);
    let (kurt_th, var_th) = (model.kurtosis(), model.variance());
    let (rk, rv) = ((kurt - kurt_th) / kurt_th, (m2 - var_th) / var_th);
    Outcome {
        pass: rk.abs() <= 0.15 && rv.abs() <= 0.05,
        detail: format!(
            "kurtosis {kurt:.2} vs {kurt_th:.2} ({:+.1}%, limit 15%); variance {m2:.4e} vs {var_th:.4e} ({:+.1}%, limit 5%)",
            100.0 * rk,
            100.0 * rv
        ),
    }
}

// ---------------------------------------------------------------------------
// 6. ARMA aggregate MSFE
// ---------------------------------------------------------------------------

/// Forecast errors of the aggregate from the recursive ARMA predictor with
/// known past innovations.
fn aggregate_forecast_errors(model: &ArmaModel, z: &[f64], zeta: &[f64], w: &AggregationVector) -> Vec<f64> {
    let f = w.f();
    let (p, q) = (model.phi.len(), model.theta.len());
    let start = p.max(q) + 1;
    let target = arma_aggregate_target(&TimeSeries::from_values(z.to_vec()).unwrap(), w).unwrap();
    let mut out = Vec::new();
    let mut zhat = vec![0.0; f + 1];
    for t in start..z.len() - f {
        for i in 1..=f {
            let past = |s: isize| -> f64 {
                if s <= 0 {
                    z[(t as isize + s) as usize]
                } else {
                    zhat[s as usize]
                }
            };
            let ar: f64 = model.phi.iter().enumerate().map(|(k, ph)| ph * past(i as isize - k as isize - 1)).sum();
            let ma: f64 = model
                .theta
                .iter()
                .enumerate()
                .filter(|(j, _)| j + 1 >= i)
                .map(|(j, th)| th * zeta[t + i - j - 1])
                .sum();
            zhat[i] = ar + ma;
        }
        let yhat: f64 = (1..=f).map(|i| w.at(f - i + 1) * zhat[i]).sum();
        out.push(target.values()[t] - yhat);
    }
    out
}

fn arma_msfe() -> Outcome {
    let fixtures = [
        ("AR(1)", ArmaModel::new(vec![0.7], vec![], 1.0).unwrap()),
        ("MA(1)", ArmaModel::new(vec![], vec![0.5], 0.8).unwrap()),
        ("ARMA(1,1)", ArmaModel::new(vec![0.6], vec![0.3], 1.2).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut checks = Vec::new();
    for (k, (name, model)) in fixtures.iter().enumerate() {
        let (z, zeta) = arma_simulate(model, 300_000, 600 + k as u64, None).unwrap();
        for f in [1usize, 2, 5] {
            let w = AggregationVector::new((0..f).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let errors = aggregate_forecast_errors(model, z.values(), zeta.values(), &w);
            let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
            checks.push(Check::new(format!("{name} f={f}"), arma_aggregate_msfe(model, &w), &sq));
        }
    }
    summarize(&checks, 3.0)
}

// ---------------------------------------------------------------------------
// 7. property suite
// ---------------------------------------------------------------------------

fn property_suite() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, pass: bool, detail: String| {
        ok &= pass;
        notes.push(format!("{name} {} ({detail})", if pass { "ok" } else { "FAILED" }));
    };

    // Canonical and stationary forms are idempotent.
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut idem = true;
    for _ in 0..2000 {
        let k = rng.random_range(1..=5);
        let powers = (0..k).map(|_| rng.random_range(1..=4)).collect();
        let lags = (1..k).map(|_| rng.random_range(-4..=4)).collect();
        let s = MomentSpec::new(powers, lags).unwrap();
        let c = s.canonical();
        idem &= c.canonical() == c && s.stationary().stationary() == s.stationary() && c.order() == s.order();
    }
    record("canonical idempotence", idem, "2000 random specs".into());

    // Gaussian automoments by pairing vs Monte Carlo.
    let (mean, phi, s2) = (0.3, 0.6, 0.64);
    let z = InputLaw::Ar1Gaussian { mean, phi, sigma2: s2 }.sample(1_000_000, 72);
    let zv = z.values();
    let g0 = s2 / (1.0 - phi * phi);
    let acvf = move |h: i64| g0 * phi.powi(h.unsigned_abs() as i32);
    let specs = [
        MomentSpec::single(8),
        MomentSpec::pair(4, 4, 1),
        MomentSpec::pair(3, 5, 2),
        MomentSpec::new(vec![2, 2, 2, 2], vec![1, 3, 4]).unwrap(),
        MomentSpec::new(vec![1, 1, 1, 1, 1, 1, 1, 1], vec![1, 2, 3, 4, 5, 6, 7]).unwrap(),
        MomentSpec::new(vec![2, 3, 3], vec![-1, 2]).unwrap(),
    ];
    let mut checks = Vec::new();
    for spec in &specs {
        let f = spec.factors();
        let lo = f.iter().map(|x| x.0).min().unwrap().min(0);
        let hi = f.iter().map(|x| x.0).max().unwrap().max(0);
        let prod: Vec<f64> = ((-lo) as usize..zv.len() - hi as usize)
            .map(|t| f.iter().map(|&(l, p)| zv[(t as i64 + l) as usize].powi(p as i32)).product())
            .collect();
        checks.push(Check::new(spec.to_string(), gaussian_automoment(mean, &acvf, spec).unwrap(), &prod));
    }
    let iss = summarize(&checks, 3.0);
    record("Isserlis vs Monte Carlo", iss.pass, iss.detail);

    // Separation on a model with nonsingular A and monotone input map.
    let sp_model = fixture_model(10, 2, 0.8, 73);
    let base = InputLaw::IidUniform { half_width: 1.0 }.sample(200, 74);
    let probe = SpProbe { base_input: base, perturb_index: 100, delta: 0.1, horizon: 60, gap_floor: None };
    let sp = check_separation(System::Model(&sp_model), &probe).unwrap();
    let hyp = sp.hypotheses.clone().unwrap();
    record(
        "separation",
        sp.pass && hyp.nonsingular && hyp.input_map_injective,
        format!("min gap {:.2e} over {} steps, floor {:.1e}, min |eig A| {:.3e}", sp.min_gap, sp.gaps.len(), sp.gap_floor, hyp.min_eigen_modulus),
    );

    // Fading memory bound for the linearized benchmark reservoir.
    let params = TdrParams::new(0.839, KernelSpec::Ikeda(Ikeda::BENCHMARK), generate_mask(40, 75)).unwrap();
    let bench = ReservoirModel::from_tdr(&params, 4).unwrap();
    let ufm = UfmProbe { epsilon: 1e-3, delta_eps: 0.01, h_eps: 5, trials: 1000, input_bound: 0.1, history: 50 };
    let fm = check_fading_memory(System::Model(&bench), &ufm, 76).unwrap();
    record(
        "fading-memory bound",
        fm.within_analytic_bound == Some(true),
        format!("1000 trials, max gap {:.3e}, analytic bound {:.3e}, |A|inf {:.3}", fm.max_final_gap, fm.analytic_bound.unwrap(), fm.norm_a.unwrap()),
    );

    // Ridge monotonicity in λ on exact reservoir states.
    let path = arsv_simulate(&ArsvModel::benchmark(), 20_000, 77, None).unwrap();
    let fp = solve_fixed_point(&params.kernel, None).unwrap();
    let states = run_reservoir(&params, &path.z, &vec![fp.x0; 40]).unwrap();
    let rp = RidgeProblem::from_samples(&states, &path.sigma, 200).unwrap();
    let scale = rp.gamma.trace() / 40.0;
    let nmse: Vec<f64> = (0..13).map(|k| rp.nmse(&rp.solve(scale * 10f64.powi(k - 12)).unwrap()).unwrap()).collect();
    let mono = nmse.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    record("ridge monotonicity", mono, format!("in-sample NMSE {:.4} .. {:.4} over 13 decades", nmse[0], nmse[12]));

    // Unclamped capacities stay in the unit interval.
    let policy = TruncationPolicy::default();
    let mut caps = Vec::new();
    let mut seed = 100;
    for law in input_laws() {
        let m = law.provider();
        for r in [1u32, 2, 4] {
            for n in [3usize, 10] {
                seed += 1;
                let model = fixture_model(n, r, 0.6, seed);
                let gamma = state_autocovariance0(&model, m.as_ref(), &policy).unwrap().value;
                let l = [0.7, -0.4, 0.3, 0.5];
                let lin = linear_task_cov(&model, m.as_ref(), &l, 1, 2, &policy).unwrap().value;
                let var_lin = linear_task_variance(m.as_ref(), &l).unwrap();
                let q = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, -0.1, 0.2, -0.3, 0.4, -0.1, 0.4, 0.6]);
                let (qvar, qcov) = quadratic_task_cov(&model, m.as_ref(), &q, 1, 1, &policy).unwrap();
                let com = lagged_square_comoments(m.as_ref(), r, 40);
                let mu_eps = epsilon_mean(&model, m.as_ref()).unwrap();
                let mu_z = m.moment(&MomentSpec::single(1)).unwrap();
                let fcov = filter_task_cov(&model, &com, mu_z, &mu_eps, &policy, false).unwrap().value;
                for lambda in [0.0, 1e-6, 1e-2] {
                    caps.push(capacity(&gamma, &lin, var_lin, lambda).unwrap().capacity_unclamped);
                    caps.push(capacity(&gamma, &qcov.value, qvar, lambda).unwrap().capacity_unclamped);
                    caps.push(capacity(&gamma, &fcov, com.var_y(), lambda).unwrap().capacity_unclamped);
                }
            }
        }
    }
    let lo = caps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = caps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    record("capacity range", lo >= -1e-8 && hi <= 1.0 + 1e-8, format!("{} capacities in [{lo:.4}, {hi:.4}]", caps.len()));

    // Two initial conditions contract under the model recursion.
    let input = InputLaw::IidUniform { half_width: 0.1 }.sample(300, 78);
    let x0 = bench.x0().as_slice().to_vec();
    let far: Vec<f64> = x0.iter().map(|v| v + 1.0).collect();
    let worst = contraction_violation(&bench, &input, &x0, &far).unwrap();
    record("contraction", worst <= 1e-12, format!("largest excess {worst:.1e}"));

    Outcome { pass: ok, detail: notes.join("; ") }
}

// ---------------------------------------------------------------------------
// 8. CLI replay determinism
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rescap")).args(args).output().expect("binary runs")
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let commands = [
        ("simulate", "smoke_simulate.json"),
        ("capacity", "smoke_capacity.json"),
        ("surface", "smoke_surface.json"),
        ("benchmark", "smoke_benchmark.json"),
        ("check-properties", "smoke_properties.json"),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (cmd, cfg) in commands {
        let first = tmp.path().join(format!("{cmd}-1"));
        let second = tmp.path().join(format!("{cmd}-2"));
        let cfg_path = configs.join(cfg);
        let a = run_cli(&[cmd, "--config", cfg_path.to_str().unwrap(), "--out", first.to_str().unwrap(), "--seed", "4242"]);
        // Replay from the persisted config alone, on a different worker count.
        let persisted = first.join("config.json");
        let b = run_cli(&[cmd, "--config", persisted.to_str().unwrap(), "--out", second.to_str().unwrap(), "--workers", "3"]);
        let same = a.status.success() && b.status.success() && dir_files(&first) == dir_files(&second);
        ok &= same;
        notes.push(format!(
            "{cmd} {}",
            if same {
                format!("identical ({} files)", dir_files(&first).len())
            } else {
                format!("DIFFERS: {}", String::from_utf8_lossy(&a.stderr).trim())
            }
        ));
    }
    Outcome { pass: ok, detail: notes.join("; ") }
}
