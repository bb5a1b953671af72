//! Versioned JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::VolTransform;
use crate::capacity::TruncationPolicy;
use crate::generators::{ArmaModel, ArsvModel, GarchModel};
use crate::properties::UfmProbe;
use crate::series::MAX_GAUSSIAN_ORDER;
use crate::tdr::{generate_mask, KernelSpec, TdrParams};

use super::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub generator: GeneratorSpec,
    pub tdr: TdrSpec,
    /// Factor applied to the generated input before it enters the reservoir.
    #[serde(default = "default_scale")]
    pub input_scale: f64,
    /// Taylor order `R` of the reservoir model.
    #[serde(default = "default_order")]
    pub model_order: u32,
    /// Ridge constants, in units of the mean state variance `tr Γ / N`.
    pub lambda_grid: Vec<f64>,
    pub task: TaskConfig,
    pub samples: SampleSpec,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    #[serde(default)]
    pub moments: MomentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SweepGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub properties: Option<PropertiesSpec>,
}

fn default_scale() -> f64 {
    1.0
}

fn default_order() -> u32 {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Arma(ArmaModel),
    Garch(GarchModel),
    Arsv(ArsvModel),
    IidUniform { half_width: f64 },
    IidGaussian { sigma2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdrSpec {
    pub n: usize,
    pub d: f64,
    pub kernel: KernelSpec,
    pub mask: MaskSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSpec {
    Seed(u64),
    Values(Vec<f64>),
}

impl TdrSpec {
    pub fn mask(&self) -> Vec<f64> {
        match &self.mask {
            MaskSpec::Seed(s) => generate_mask(self.n, *s),
            MaskSpec::Values(v) => v.clone(),
        }
    }

    pub fn params(&self) -> crate::Result<TdrParams> {
        TdrParams::new(self.d, self.kernel, self.mask())
    }

    pub fn mask_seed(&self) -> Option<u64> {
        match self.mask {
            MaskSpec::Seed(s) => Some(s),
            MaskSpec::Values(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    /// Filter `transform(b(t))` of an ARSV log-variance from the returns.
    Volatility {
        transform: VolTransform,
        #[serde(default = "default_comoment_lags")]
        comoment_lags: usize,
        #[serde(default)]
        center_on_input_mean: bool,
    },
    /// `y(t) = Σ_j l_j z(t + f + 1 - j)` on the scaled input.
    Linear { l: Vec<f64>, f: usize },
    /// `y(t) = Σ_ij q_ij z(t + f + 1 - i) z(t + f + 1 - j)` on the scaled input.
    Quadratic { q: Vec<Vec<f64>>, f: usize },
}

fn default_comoment_lags() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub washout: usize,
    pub train: usize,
    pub test: usize,
}

impl SampleSpec {
    pub fn total(&self) -> usize {
        self.washout + self.train + self.test
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    /// Sample moments of the training window.
    #[default]
    Empirical,
    /// Exact Gaussian or IID moments of the generator law.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentConfig {
    #[serde(default)]
    pub source: MomentSource,
    /// Lag beyond which sample moments are treated as independent.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_horizon() -> usize {
    20
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self { source: MomentSource::Empirical, horizon: default_horizon() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Eta,
    Gamma,
    Phi,
    D,
    Lambda,
    InputScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: SweepParam,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn value(&self, k: usize) -> f64 {
        self.min + (self.max - self.min) * k as f64 / (self.steps - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    EmpiricalTdr,
    ClosedFormModel,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    /// NMSE on the training window.
    InSample,
    /// NMSE on the test window.
    OutOfSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub axes: Vec<Axis>,
    pub mode: SweepMode,
    #[serde(default = "default_score")]
    pub score: Score,
    /// Independent data sets averaged per cell.
    #[serde(default = "default_one")]
    pub replicates: usize,
}

fn default_score() -> Score {
    Score::OutOfSample
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    #[serde(default = "default_one")]
    pub replicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpSettings {
    pub length: usize,
    pub perturb_index: usize,
    pub delta: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertiesSpec {
    pub separation: SpSettings,
    pub fading_memory: UfmProbe,
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {msg}"))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field(name, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(field("version", format!("expected {CONFIG_VERSION}, got {}", self.version)));
        }
        match &self.generator {
            GeneratorSpec::Arma(m) => m.validate().map_err(|e| field("generator", e))?,
            GeneratorSpec::Garch(m) => m.validate().map_err(|e| field("generator", e))?,
            GeneratorSpec::Arsv(m) => m.validate().map_err(|e| field("generator", e))?,
            GeneratorSpec::IidUniform { half_width } => positive("generator.half_width", *half_width)?,
            GeneratorSpec::IidGaussian { sigma2 } => positive("generator.sigma2", *sigma2)?,
        }
        if self.tdr.n == 0 {
            return Err(field("tdr.n", "must be at least 1"));
        }
        if let MaskSpec::Values(v) = &self.tdr.mask {
            if v.len() != self.tdr.n {
                return Err(field("tdr.mask.values", format!("has {} entries for n = {}", v.len(), self.tdr.n)));
            }
        }
        self.tdr.params().map_err(|e| field("tdr", e))?;
        positive("input_scale", self.input_scale)?;
        if self.model_order == 0 || self.model_order > 8 {
            return Err(field("model_order", "must lie in 1..=8"));
        }
        if self.lambda_grid.is_empty() {
            return Err(field("lambda_grid", "must not be empty"));
        }
        if let Some(bad) = self.lambda_grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(field("lambda_grid", format!("entry {bad} is not a non-negative number")));
        }
        match &self.task {
            TaskConfig::Volatility { .. } => {
                if !matches!(self.generator, GeneratorSpec::Arsv(_)) {
                    return Err(field("task", "volatility filtering needs an arsv generator"));
                }
            }
            TaskConfig::Linear { l, f } => {
                if l.is_empty() || *f >= l.len() {
                    return Err(field("task.l", "needs more than f entries"));
                }
            }
            TaskConfig::Quadratic { q, f } => {
                if q.is_empty() || q.iter().any(|row| row.len() != q.len()) {
                    return Err(field("task.q", "must be a non-empty square matrix"));
                }
                if *f >= q.len() {
                    return Err(field("task.f", "must be smaller than the size of q"));
                }
            }
        }
        if self.samples.train <= self.tdr.n + 1 {
            return Err(field("samples.train", "must exceed the number of neurons plus one"));
        }
        if self.samples.test == 0 {
            return Err(field("samples.test", "must be positive"));
        }
        self.truncation.validate().map_err(|e| field("truncation", e))?;
        if self.moments.source == MomentSource::Analytic {
            let analytic = matches!(
                self.generator,
                GeneratorSpec::IidUniform { .. } | GeneratorSpec::IidGaussian { .. } | GeneratorSpec::Arma(_)
            );
            if !analytic {
                return Err(field("moments.source", "analytic moments exist only for iid and gaussian arma inputs"));
            }
            let needed = match self.task {
                TaskConfig::Quadratic { .. } => 2 * self.model_order + 2,
                _ => 2 * self.model_order,
            };
            if matches!(self.generator, GeneratorSpec::Arma(_)) && needed > MAX_GAUSSIAN_ORDER {
                return Err(field("model_order", format!("gaussian moments of order {needed} exceed {MAX_GAUSSIAN_ORDER}")));
            }
        }
        if let Some(grid) = &self.surface {
            if grid.axes.is_empty() || grid.axes.len() > 2 {
                return Err(field("surface.axes", "needs one or two axes"));
            }
            for (k, axis) in grid.axes.iter().enumerate() {
                if axis.steps < 2 {
                    return Err(field(&format!("surface.axes[{k}].steps"), "must be at least 2"));
                }
                if !(axis.min.is_finite() && axis.max.is_finite() && axis.min <= axis.max) {
                    return Err(field(&format!("surface.axes[{k}]"), "needs finite min <= max"));
                }
            }
            if grid.replicates == 0 {
                return Err(field("surface.replicates", "must be positive"));
            }
        }
        if let Some(b) = &self.benchmark {
            if b.replicates == 0 {
                return Err(field("benchmark.replicates", "must be positive"));
            }
            if !matches!(self.generator, GeneratorSpec::Arsv(_)) {
                return Err(field("benchmark", "needs an arsv generator"));
            }
        }
        if let Some(p) = &self.properties {
            if p.separation.perturb_index >= p.separation.length {
                return Err(field("properties.separation.perturb_index", "must lie inside the input"));
            }
        }
        Ok(())
    }
}
