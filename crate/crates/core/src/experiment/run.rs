//! The five commands.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{arsv_kalman_filter, kalman_volatility_nmse, riccati_steady_state, VolTransform, LOG_CHI2_VARIANCE};
use crate::capacity::ReservoirModel;
use crate::generators::ArsvModel;
use crate::properties::{check_fading_memory, check_separation, FadingMemoryReport, SeparationReport, SpProbe, System};
use crate::rng::derive_seed;
use crate::series::TimeSeries;
use crate::tdr::{run_reservoir, solve_fixed_point, Ikeda, KernelSpec, StatePath, TdrParams};

use super::config::{ExperimentConfig, GeneratorSpec, Score, SweepGrid, SweepMode, SweepParam, TaskConfig};
use super::data::{closed_form, fit_readout, generate, model_moments, replicate_seed, teaching, volatility_target, ClosedForm, ReadoutFit, Sample};
use super::{csv_bytes, CliError, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Capacity,
    Surface,
    Benchmark,
    CheckProperties,
}

/// Run a command and collect its files, including the resolved config.
pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    cfg.validate()?;
    let mut out = Outputs::default();
    out.add("config.json", format!("{}\n", cfg.to_json()).into_bytes());
    match command {
        Command::Simulate => {
            let r = simulate(cfg)?;
            out.add_json("seeds.json", &seeds(cfg, 1));
            out.add("series.csv", r.series_csv()?);
            out.add_json("summary.json", &r.summary);
        }
        Command::Capacity => {
            let r = capacity(cfg)?;
            out.add_json("seeds.json", &seeds(cfg, 1));
            out.add_json("capacity.json", &r);
        }
        Command::Surface => {
            let grid = cfg.surface.as_ref().ok_or_else(|| CliError::Config("surface: section missing".into()))?;
            let r = surface(cfg)?;
            out.add_json("seeds.json", &seeds(cfg, grid.replicates));
            out.add("surface.csv", csv_bytes(&r.rows)?);
            out.add_json("surface_summary.json", &r.summary);
        }
        Command::Benchmark => {
            let reps = cfg.benchmark.map_or(1, |b| b.replicates);
            let r = benchmark(cfg)?;
            out.add_json("seeds.json", &seeds(cfg, reps));
            out.add("benchmark.csv", csv_bytes(&r.rows)?);
            out.add_json("benchmark_summary.json", &r.summary);
        }
        Command::CheckProperties => {
            let r = check_properties(cfg)?;
            out.add_json("seeds.json", &seeds(cfg, 1));
            out.add_json("properties.json", &r);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Seeds {
    master: u64,
    mask: Option<u64>,
    replicates: Vec<u64>,
}

fn seeds(cfg: &ExperimentConfig, replicates: usize) -> Seeds {
    Seeds {
        master: cfg.seed,
        mask: cfg.tdr.mask_seed(),
        replicates: (0..replicates).map(|i| replicate_seed(cfg.seed, i)).collect(),
    }
}

fn rest_state(params: &TdrParams) -> crate::Result<Vec<f64>> {
    Ok(vec![solve_fixed_point(&params.kernel, None)?.x0; params.n()])
}

fn drive(params: &TdrParams, input: &TimeSeries) -> crate::Result<StatePath> {
    run_reservoir(params, input, &rest_state(params)?)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub nmse_train: f64,
    pub nmse_test: f64,
    /// `1 - nmse_test`
    pub empirical_capacity: f64,
    pub fit: ReadoutFit,
}

pub struct SimulateResult {
    pub input: TimeSeries,
    pub teaching: TimeSeries,
    pub summary: SimulateSummary,
}

impl SimulateResult {
    fn series_csv(&self) -> Result<Vec<u8>, CliError> {
        #[derive(Serialize)]
        struct Row {
            t: i64,
            input: f64,
            teaching: Option<f64>,
        }
        let rows: Vec<Row> = (self.input.origin()..=self.input.end())
            .map(|t| Row { t, input: self.input.get(t).unwrap_or(f64::NAN), teaching: self.teaching.get(t) })
            .collect();
        csv_bytes(&rows)
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulateResult, CliError> {
    let sample = generate(&cfg.generator, cfg.samples.total(), replicate_seed(cfg.seed, 0))?;
    let input = sample.input(cfg.input_scale)?;
    let target = teaching(&cfg.task, &sample, &input)?;
    let states = drive(&cfg.tdr.params()?, &input)?;
    let fit = fit_readout(&states, &target, &cfg.samples, &cfg.lambda_grid)?;
    Ok(SimulateResult {
        input,
        teaching: target,
        summary: SimulateSummary {
            nmse_train: fit.nmse_train,
            nmse_test: fit.nmse_test,
            empirical_capacity: 1.0 - fit.nmse_test,
            fit,
        },
    })
}

// ---------------------------------------------------------------------------
// capacity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CapacityResult {
    pub fixed_point: f64,
    pub closed_form: ClosedForm,
}

pub fn capacity(cfg: &ExperimentConfig) -> Result<CapacityResult, CliError> {
    let sample = generate(&cfg.generator, cfg.samples.total(), replicate_seed(cfg.seed, 0))?;
    let input = sample.input(cfg.input_scale)?;
    let target = teaching(&cfg.task, &sample, &input)?;
    let params = cfg.tdr.params()?;
    let model = ReservoirModel::from_tdr(&params, cfg.model_order)?;
    let moments = model_moments(cfg, &input)?;
    let cf = closed_form(cfg, &model, moments.as_ref(), &input, &target, &cfg.lambda_grid)?;
    Ok(CapacityResult { fixed_point: model.x0()[0], closed_form: cf })
}

// ---------------------------------------------------------------------------
// surface
// ---------------------------------------------------------------------------

pub const MODE_EMPIRICAL: &str = "empirical_tdr";
pub const MODE_MODEL: &str = "closed_form_model";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub axis1: f64,
    pub axis2: Option<f64>,
    pub mode: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Argmin {
    pub i: usize,
    pub j: usize,
    pub axis1: f64,
    pub axis2: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub i: usize,
    pub j: usize,
    pub mode: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceSummary {
    pub axes: Vec<String>,
    pub argmin: BTreeMap<String, Argmin>,
    /// Chebyshev distance between the argmin cells of the two modes.
    pub argmin_distance: Option<usize>,
    pub failures: Vec<CellFailure>,
}

pub struct SurfaceResult {
    pub rows: Vec<SurfaceRow>,
    pub summary: SurfaceSummary,
}

impl SurfaceResult {
    /// Values of one mode as a row-major `steps1 × steps2` grid.
    pub fn grid(&self, mode: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.mode == mode).map(|r| r.value).collect()
    }
}

fn ikeda(c: &mut ExperimentConfig) -> Result<&mut Ikeda, CliError> {
    match &mut c.tdr.kernel {
        KernelSpec::Ikeda(k) => Ok(k),
        _ => Err(CliError::Config("surface: kernel parameters can only be swept for the ikeda kernel".into())),
    }
}

/// Configuration of a single grid cell.
fn cell_config(cfg: &ExperimentConfig, grid: &SweepGrid, values: &[f64]) -> Result<ExperimentConfig, CliError> {
    let mut c = cfg.clone();
    for (axis, &v) in grid.axes.iter().zip(values) {
        match axis.param {
            SweepParam::Eta => ikeda(&mut c)?.eta = v,
            SweepParam::Gamma => ikeda(&mut c)?.gamma = v,
            SweepParam::Phi => ikeda(&mut c)?.phi = v,
            SweepParam::D => c.tdr.d = v,
            SweepParam::Lambda => c.lambda_grid = vec![v],
            SweepParam::InputScale => c.input_scale = v,
        }
    }
    Ok(c)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn surface(cfg: &ExperimentConfig) -> Result<SurfaceResult, CliError> {
    let grid = cfg.surface.as_ref().ok_or_else(|| CliError::Config("surface: section missing".into()))?;
    let steps1 = grid.axes[0].steps;
    let steps2 = grid.axes.get(1).map_or(1, |a| a.steps);
    let samples: Vec<Sample> = (0..grid.replicates)
        .into_par_iter()
        .map(|r| generate(&cfg.generator, cfg.samples.total(), replicate_seed(cfg.seed, r)))
        .collect::<crate::Result<_>>()?;
    let scale_swept = grid.axes.iter().any(|a| a.param == SweepParam::InputScale);
    // Moments depend only on the data unless the input scale is swept.
    let shared = if scale_swept || grid.mode == SweepMode::EmpiricalTdr {
        None
    } else {
        Some(
            samples
                .iter()
                .map(|s| {
                    let input = s.input(cfg.input_scale)?;
                    let target = teaching(&cfg.task, s, &input)?;
                    let moments = model_moments(cfg, &input)?;
                    Ok((input, target, moments))
                })
                .collect::<crate::Result<Vec<_>>>()?,
        )
    };
    let modes: Vec<&str> = match grid.mode {
        SweepMode::EmpiricalTdr => vec![MODE_EMPIRICAL],
        SweepMode::ClosedFormModel => vec![MODE_MODEL],
        SweepMode::Both => vec![MODE_EMPIRICAL, MODE_MODEL],
    };
    let cells: Vec<(usize, usize)> = (0..steps1).flat_map(|i| (0..steps2).map(move |j| (i, j))).collect();
    let evaluated: Vec<Vec<Result<f64, String>>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut values = vec![grid.axes[0].value(i)];
            if let Some(a) = grid.axes.get(1) {
                values.push(a.value(j));
            }
            let c = match cell_config(cfg, grid, &values) {
                Ok(c) => c,
                Err(e) => return modes.iter().map(|_| Err(e.to_string())).collect(),
            };
            modes.iter().map(|&mode| evaluate_cell(&c, grid.score, mode, &samples, shared.as_deref()).map_err(|e| e.to_string())).collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut argmin: BTreeMap<String, Argmin> = BTreeMap::new();
    for (m, &mode) in modes.iter().enumerate() {
        for (&(i, j), vals) in cells.iter().zip(&evaluated) {
            let axis1 = grid.axes[0].value(i);
            let axis2 = grid.axes.get(1).map(|a| a.value(j));
            let value = match &vals[m] {
                Ok(v) => *v,
                Err(reason) => {
                    failures.push(CellFailure { i, j, mode: mode.to_string(), reason: reason.clone() });
                    f64::NAN
                }
            };
            if value.is_finite() && argmin.get(mode).is_none_or(|a| value < a.value) {
                argmin.insert(mode.to_string(), Argmin { i, j, axis1, axis2, value });
            }
            rows.push(SurfaceRow { axis1, axis2, mode: mode.to_string(), value });
        }
    }
    let argmin_distance = match (argmin.get(MODE_EMPIRICAL), argmin.get(MODE_MODEL)) {
        (Some(a), Some(b)) => Some(a.i.abs_diff(b.i).max(a.j.abs_diff(b.j))),
        _ => None,
    };
    let axes = grid.axes.iter().map(|a| serde_json::to_value(a.param).expect("serializes").as_str().unwrap_or("").to_string()).collect();
    Ok(SurfaceResult { rows, summary: SurfaceSummary { axes, argmin, argmin_distance, failures } })
}

type SharedMoments = (TimeSeries, TimeSeries, Box<dyn crate::series::AutomomentProvider>);

fn evaluate_cell(
    cfg: &ExperimentConfig,
    score: Score,
    mode: &str,
    samples: &[Sample],
    shared: Option<&[SharedMoments]>,
) -> Result<f64, CliError> {
    let params = cfg.tdr.params()?;
    let mut values = Vec::with_capacity(samples.len());
    if mode == MODE_EMPIRICAL {
        for s in samples {
            let input = s.input(cfg.input_scale)?;
            let target = teaching(&cfg.task, s, &input)?;
            let fit = fit_readout(&drive(&params, &input)?, &target, &cfg.samples, &cfg.lambda_grid)?;
            values.push(match score {
                Score::InSample => fit.nmse_train,
                Score::OutOfSample => fit.nmse_test,
            });
        }
    } else {
        let model = ReservoirModel::from_tdr(&params, cfg.model_order)?;
        for (k, s) in samples.iter().enumerate() {
            let cf = match shared {
                Some(sh) => {
                    let (input, target, moments) = &sh[k];
                    closed_form(cfg, &model, moments.as_ref(), input, target, &cfg.lambda_grid)?
                }
                None => {
                    let input = s.input(cfg.input_scale)?;
                    let target = teaching(&cfg.task, s, &input)?;
                    let moments = model_moments(cfg, &input)?;
                    closed_form(cfg, &model, moments.as_ref(), &input, &target, &cfg.lambda_grid)?
                }
            };
            values.push(cf.error());
        }
    }
    Ok(mean(&values))
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

pub const METHOD_RC: &str = "reservoir_computer";
pub const METHOD_MODEL: &str = "reservoir_model";
pub const METHOD_KALMAN: &str = "kalman_filtered";
pub const METHOD_KALMAN_PREDICTED: &str = "kalman_predicted";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub replicate: usize,
    pub method: String,
    pub vol: f64,
    pub var: f64,
    pub log_vol: f64,
    pub log_var: f64,
}

impl BenchmarkRow {
    fn new(replicate: usize, method: &str, by: &BTreeMap<VolTransform, f64>) -> Self {
        Self {
            replicate,
            method: method.to_string(),
            vol: by[&VolTransform::ExpHalf],
            var: by[&VolTransform::Exp],
            log_vol: by[&VolTransform::LogHalf],
            log_var: by[&VolTransform::Identity],
        }
    }

    pub fn get(&self, t: VolTransform) -> f64 {
        match t {
            VolTransform::ExpHalf => self.vol,
            VolTransform::Exp => self.var,
            VolTransform::LogHalf => self.log_vol,
            VolTransform::Identity => self.log_var,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkSummary {
    /// Median NMSE over replicates, keyed by method then column.
    pub median: BTreeMap<String, BTreeMap<String, f64>>,
    pub kalman_steady_state: KalmanSteadyState,
    pub rc_lambda: Vec<BTreeMap<String, f64>>,
    pub model_lambda: Vec<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KalmanSteadyState {
    pub predicted_variance: f64,
    pub filtered_variance: f64,
}

pub struct BenchmarkResult {
    pub rows: Vec<BenchmarkRow>,
    pub summary: BenchmarkSummary,
}

impl BenchmarkResult {
    pub fn rows_for(&self, method: &str) -> Vec<&BenchmarkRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

struct Replicate {
    rows: Vec<BenchmarkRow>,
    rc_lambda: BTreeMap<String, f64>,
    model_lambda: BTreeMap<String, f64>,
}

fn benchmark_replicate(cfg: &ExperimentConfig, model: &ArsvModel, index: usize) -> Result<Replicate, CliError> {
    let sample = generate(&cfg.generator, cfg.samples.total(), replicate_seed(cfg.seed, index))?;
    let input = sample.input(cfg.input_scale)?;
    let params = cfg.tdr.params()?;
    let states = drive(&params, &input)?;
    let rmodel = ReservoirModel::from_tdr(&params, cfg.model_order)?;
    let moments = model_moments(cfg, &input)?;
    let test_from = (cfg.samples.washout + cfg.samples.train) as i64;
    let test_to = cfg.samples.total() as i64 - 1;
    let kalman = arsv_kalman_filter(&sample.raw, model)?;
    let filtered = kalman.filtered.window(test_from, test_to)?;
    let predicted = kalman.predicted.window(test_from, test_to)?;

    let (mut rc, mut md, mut kf, mut kp) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    let (mut rc_lambda, mut model_lambda) = (BTreeMap::new(), BTreeMap::new());
    for t in VolTransform::ALL {
        let target = volatility_target(&sample, t)?;
        let fit = fit_readout(&states, &target, &cfg.samples, &cfg.lambda_grid)?;
        rc.insert(t, fit.nmse_test);
        rc_lambda.insert(t.label().to_string(), fit.lambda);
        let mut tcfg = cfg.clone();
        if let TaskConfig::Volatility { transform, .. } = &mut tcfg.task {
            *transform = t;
        }
        let cf = closed_form(&tcfg, &rmodel, moments.as_ref(), &input, &target, &cfg.lambda_grid)?;
        md.insert(t, cf.error());
        model_lambda.insert(t.label().to_string(), cf.best_lambda);
        kf.insert(t, kalman_volatility_nmse(&filtered, &target, t)?);
        kp.insert(t, kalman_volatility_nmse(&predicted, &target, t)?);
    }
    Ok(Replicate {
        rows: vec![
            BenchmarkRow::new(index, METHOD_RC, &rc),
            BenchmarkRow::new(index, METHOD_MODEL, &md),
            BenchmarkRow::new(index, METHOD_KALMAN, &kf),
            BenchmarkRow::new(index, METHOD_KALMAN_PREDICTED, &kp),
        ],
        rc_lambda,
        model_lambda,
    })
}

/// RC, reservoir-model and Kalman NMSE for the four volatility targets on
/// shared ARSV samples.
pub fn benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkResult, CliError> {
    let GeneratorSpec::Arsv(model) = &cfg.generator else {
        return Err(CliError::Config("benchmark: needs an arsv generator".into()));
    };
    if !matches!(cfg.task, TaskConfig::Volatility { .. }) {
        return Err(CliError::Config("benchmark: task must be volatility".into()));
    }
    let reps = cfg.benchmark.map_or(1, |b| b.replicates);
    let done: Vec<Replicate> = (0..reps)
        .into_par_iter()
        .map(|i| benchmark_replicate(cfg, model, i))
        .collect::<Result<_, _>>()?;
    let rows: Vec<BenchmarkRow> = done.iter().flat_map(|r| r.rows.clone()).collect();
    let mut med = BTreeMap::new();
    for method in [METHOD_RC, METHOD_MODEL, METHOD_KALMAN, METHOD_KALMAN_PREDICTED] {
        let cols = VolTransform::ALL
            .iter()
            .map(|&t| {
                let v = rows.iter().filter(|r| r.method == method).map(|r| r.get(t)).collect();
                (t.label().to_string(), median(v))
            })
            .collect();
        med.insert(method.to_string(), cols);
    }
    let (pp, pf) = riccati_steady_state(model, LOG_CHI2_VARIANCE);
    Ok(BenchmarkResult {
        rows,
        summary: BenchmarkSummary {
            median: med,
            kalman_steady_state: KalmanSteadyState { predicted_variance: pp, filtered_variance: pf },
            rc_lambda: done.iter().map(|r| r.rc_lambda.clone()).collect(),
            model_lambda: done.iter().map(|r| r.model_lambda.clone()).collect(),
        },
    })
}

// ---------------------------------------------------------------------------
// check-properties
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Report(T),
    Error(String),
}

impl<T> From<crate::Result<T>> for Outcome<T> {
    fn from(r: crate::Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Report(v),
            Err(e) => Outcome::Error(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertiesResult {
    pub model_spectral_radius: f64,
    pub separation_tdr: Outcome<SeparationReport>,
    pub separation_model: Outcome<SeparationReport>,
    pub fading_memory_tdr: Outcome<FadingMemoryReport>,
    pub fading_memory_model: Outcome<FadingMemoryReport>,
}

pub fn check_properties(cfg: &ExperimentConfig) -> Result<PropertiesResult, CliError> {
    let spec = cfg.properties.ok_or_else(|| CliError::Config("properties: section missing".into()))?;
    let sample = generate(&cfg.generator, spec.separation.length, replicate_seed(cfg.seed, 0))?;
    let params = cfg.tdr.params()?;
    let model = ReservoirModel::from_tdr(&params, cfg.model_order)?;
    let probe = SpProbe {
        base_input: sample.input(cfg.input_scale)?,
        perturb_index: spec.separation.perturb_index,
        delta: spec.separation.delta,
        horizon: spec.separation.horizon,
        gap_floor: None,
    };
    let ufm_seed = derive_seed(cfg.seed, "properties/fading-memory");
    Ok(PropertiesResult {
        model_spectral_radius: model.spectral_radius(),
        separation_tdr: check_separation(System::Tdr(&params), &probe).into(),
        separation_model: check_separation(System::Model(&model), &probe).into(),
        fading_memory_tdr: check_fading_memory(System::Tdr(&params), &spec.fading_memory, ufm_seed).into(),
        fading_memory_model: check_fading_memory(System::Model(&model), &spec.fading_memory, ufm_seed).into(),
    })
}
