//! Data generation, readout fitting and closed-form evaluation shared by the
//! commands.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::baselines::VolTransform;
use crate::capacity::{task_moments, CapacityReport, ReservoirModel, TaskSpec};
use crate::generators::{arma_simulate, arsv_simulate, garch_simulate};
use crate::rng::{derive_seed, stream};
use crate::series::{estimate_comoments, AutomomentProvider, GaussianMoments, IidMoments, SampleMoments, TimeSeries};
use crate::tdr::{evaluate_nmse, Readout, RidgeProblem, StatePath};
use crate::{Error, Result};

use super::config::{ExperimentConfig, GeneratorSpec, MomentSource, SampleSpec, TaskConfig};

/// Seed of the `index`-th independent data set.
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, &format!("replicate/{index}"))
}

/// One generated data set, time labels `0..total`.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Generator output before scaling.
    pub raw: TimeSeries,
    /// ARSV log-variance path, when the generator has one.
    pub log_variance: Option<TimeSeries>,
}

impl Sample {
    pub fn input(&self, scale: f64) -> Result<TimeSeries> {
        self.raw.map(|v| v * scale)
    }
}

pub fn generate(gen: &GeneratorSpec, length: usize, seed: u64) -> Result<Sample> {
    let iid = |draw: &dyn Fn(&mut crate::rng::SimRng) -> f64| -> Result<Sample> {
        let mut rng = stream(seed, "iid/input");
        let v = (0..length).map(|_| draw(&mut rng)).collect();
        Ok(Sample { raw: TimeSeries::from_values(v)?, log_variance: None })
    };
    match gen {
        GeneratorSpec::Arma(m) => Ok(Sample { raw: arma_simulate(m, length, seed, None)?.0, log_variance: None }),
        GeneratorSpec::Garch(m) => Ok(Sample { raw: garch_simulate(m, length, seed, None)?.0, log_variance: None }),
        GeneratorSpec::Arsv(m) => {
            let path = arsv_simulate(m, length, seed, None)?;
            Ok(Sample { raw: path.z, log_variance: Some(path.b) })
        }
        GeneratorSpec::IidUniform { half_width } => {
            let a = *half_width;
            iid(&|rng| rng.random_range(-a..=a))
        }
        GeneratorSpec::IidGaussian { sigma2 } => {
            let s = sigma2.sqrt();
            iid(&|rng| s * rng.sample::<f64, _>(StandardNormal))
        }
    }
}

fn lagged_input(input: &TimeSeries, width: usize, f: usize, combine: impl Fn(&[f64]) -> f64) -> Result<TimeSeries> {
    // Entry j of the window is z(t + f - j).
    let h = width - f - 1;
    let z = input.values();
    if z.len() <= width {
        return Err(Error::InsufficientData("input shorter than the task window".into()));
    }
    let mut window = vec![0.0; width];
    let values = (h..z.len() - f)
        .map(|k| {
            for (j, w) in window.iter_mut().enumerate() {
                *w = z[k + f - j];
            }
            combine(&window)
        })
        .collect();
    TimeSeries::new(values, input.origin() + h as i64)
}

/// Teaching signal of the configured task for a scaled input.
pub fn teaching(task: &TaskConfig, sample: &Sample, input: &TimeSeries) -> Result<TimeSeries> {
    match task {
        TaskConfig::Volatility { transform, .. } => volatility_target(sample, *transform),
        TaskConfig::Linear { l, f } => lagged_input(input, l.len(), *f, |w| w.iter().zip(l).map(|(a, b)| a * b).sum()),
        TaskConfig::Quadratic { q, f } => lagged_input(input, q.len(), *f, |w| {
            let mut acc = 0.0;
            for (i, row) in q.iter().enumerate() {
                for (j, qij) in row.iter().enumerate() {
                    acc += qij * w[i] * w[j];
                }
            }
            acc
        }),
    }
}

pub fn volatility_target(sample: &Sample, transform: VolTransform) -> Result<TimeSeries> {
    let b = sample
        .log_variance
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("volatility targets need an ARSV sample".into()))?;
    b.map(|v| transform.apply(v))
}

fn window(series: &TimeSeries, from: usize, len: usize) -> Result<TimeSeries> {
    series.window(from as i64, (from + len) as i64 - 1)
}

fn state_window(states: &StatePath, from: usize, len: usize) -> Result<StatePath> {
    states.window(from as i64, (from + len) as i64 - 1)
}

fn state_scale(problem: &RidgeProblem) -> f64 {
    problem.gamma.trace() / problem.gamma.nrows() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaScore {
    pub lambda: f64,
    /// `None` when the ridge system could not be solved.
    pub validation_nmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadoutFit {
    pub lambda: f64,
    pub lambda_absolute: f64,
    pub scores: Vec<LambdaScore>,
    pub nmse_train: f64,
    pub nmse_test: f64,
    pub readout: Readout,
}

/// Fit a ridge readout on the training window, choosing the relative ridge
/// constant on the last fifth of it when the grid has several entries.
pub fn fit_readout(states: &StatePath, target: &TimeSeries, samples: &SampleSpec, grid: &[f64]) -> Result<ReadoutFit> {
    let train_states = state_window(states, samples.washout, samples.train)?;
    let test_states = state_window(states, samples.washout + samples.train, samples.test)?;
    let mut scores = Vec::new();
    let lambda = if grid.len() == 1 {
        grid[0]
    } else {
        let fit_len = samples.train - samples.train / 5;
        let fit = RidgeProblem::from_samples(&state_window(states, samples.washout, fit_len)?, target, 0)?;
        let val_states = state_window(states, samples.washout + fit_len, samples.train - fit_len)?;
        let scale = state_scale(&fit);
        let mut best = (f64::INFINITY, grid[0]);
        for &l in grid {
            let score = fit
                .solve(l * scale)
                .and_then(|r| evaluate_nmse(&val_states, &r, target))
                .ok()
                .filter(|v| v.is_finite());
            if let Some(v) = score {
                if v < best.0 {
                    best = (v, l);
                }
            }
            scores.push(LambdaScore { lambda: l, validation_nmse: score });
        }
        best.1
    };
    let problem = RidgeProblem::from_samples(&train_states, target, 0)?;
    let lambda_absolute = lambda * state_scale(&problem);
    let readout = problem.solve(lambda_absolute)?;
    Ok(ReadoutFit {
        lambda,
        lambda_absolute,
        scores,
        nmse_train: problem.nmse(&readout)?,
        nmse_test: evaluate_nmse(&test_states, &readout, target)?,
        readout,
    })
}

/// Automoments of the scaled input used by the closed-form formulas.
pub fn model_moments(cfg: &ExperimentConfig, input: &TimeSeries) -> Result<Box<dyn AutomomentProvider>> {
    let s = cfg.input_scale;
    let order = 4 * cfg.model_order + 4;
    Ok(match (cfg.moments.source, &cfg.generator) {
        (MomentSource::Empirical, _) => {
            let train = window(input, cfg.samples.washout, cfg.samples.train)?;
            Box::new(SampleMoments::new(&train, cfg.moments.horizon)?)
        }
        (MomentSource::Analytic, GeneratorSpec::IidUniform { half_width }) => Box::new(IidMoments::uniform(half_width * s, order)),
        (MomentSource::Analytic, GeneratorSpec::IidGaussian { sigma2 }) => Box::new(IidMoments::gaussian(sigma2 * s * s, order)),
        (MomentSource::Analytic, GeneratorSpec::Arma(m)) => {
            let acvf = m.autocovariance(cfg.truncation.k_max).into_iter().map(|g| g * s * s).collect();
            Box::new(GaussianMoments::from_acvf_table(0.0, acvf))
        }
        _ => return Err(Error::InvalidArgument("no analytic moments for this generator".into())),
    })
}

fn task_spec(cfg: &ExperimentConfig, input: &TimeSeries, target: &TimeSeries) -> Result<TaskSpec> {
    Ok(match &cfg.task {
        TaskConfig::Volatility { comoment_lags, center_on_input_mean, .. } => {
            let z = window(input, cfg.samples.washout, cfg.samples.train)?;
            let comoments = estimate_comoments(target, &z, cfg.model_order, (-(*comoment_lags as i64), 0))?;
            TaskSpec::Filter { comoments, center_on_input_mean: *center_on_input_mean }
        }
        TaskConfig::Linear { l, f } => TaskSpec::Linear { l: l.clone(), f: *f, h: l.len() - f - 1 },
        TaskConfig::Quadratic { q, f } => {
            let n = q.len();
            TaskSpec::Quadratic { q: DMatrix::from_fn(n, n, |i, j| q[i][j]), f: *f, h: n - f - 1 }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaCapacity {
    pub lambda: f64,
    pub lambda_absolute: f64,
    pub report: Option<CapacityReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedForm {
    pub spectral_radius: f64,
    pub by_lambda: Vec<LambdaCapacity>,
    /// Largest capacity over the grid.
    pub best_lambda: f64,
    pub best_capacity: f64,
}

impl ClosedForm {
    pub fn error(&self) -> f64 {
        1.0 - self.best_capacity
    }
}

/// Closed-form capacity of the reservoir model for every ridge constant in
/// the grid.
pub fn closed_form(
    cfg: &ExperimentConfig,
    model: &ReservoirModel,
    moments: &dyn AutomomentProvider,
    input: &TimeSeries,
    target: &TimeSeries,
    grid: &[f64],
) -> Result<ClosedForm> {
    let task = task_spec(cfg, input, target)?;
    let tm = task_moments(model, moments, &task, &cfg.truncation)?;
    let scale = tm.state_scale();
    let by_lambda: Vec<LambdaCapacity> = grid
        .iter()
        .map(|&l| match tm.capacity(l * scale) {
            Ok(r) => LambdaCapacity { lambda: l, lambda_absolute: l * scale, report: Some(r), error: None },
            Err(e) => LambdaCapacity { lambda: l, lambda_absolute: l * scale, report: None, error: Some(e.to_string()) },
        })
        .collect();
    let best = by_lambda
        .iter()
        .filter_map(|c| c.report.as_ref().map(|r| (c.lambda, r.capacity)))
        .fold(None, |acc: Option<(f64, f64)>, (l, c)| match acc {
            Some((_, bc)) if bc >= c => acc,
            _ => Some((l, c)),
        });
    let (best_lambda, best_capacity) = match best {
        Some(b) => b,
        None => {
            return Err(by_lambda
                .first()
                .and_then(|c| c.error.clone())
                .map_or(Error::SingularGamma, Error::SingularSystem))
        }
    };
    Ok(ClosedForm { spectral_radius: model.spectral_radius(), by_lambda, best_lambda, best_capacity })
}
