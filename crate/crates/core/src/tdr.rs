//! Time-delay reservoir: exact simulation, linearization ingredients and
//! ridge readouts.
//!
//! Neuron `i` of layer `t` is updated by the leaky cascade
//!
//! ```text
//! x_i(t) = e^{-ξ} x_{i-1}(t) + (1 - e^{-ξ}) f(x_i(t-1), c_i z(t)),   x_0(t) = x_N(t-1)
//! ```
//!
//! with `ξ = ln(1 + d)`.

use std::fmt::Debug;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::stream;
use crate::series::{overlap, TimeSeries};

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

/// Scalar nonlinearity `f(x, I)` with the derivatives needed for the
/// reservoir model.
pub trait Kernel: Debug + Send + Sync {
    fn eval(&self, x: f64, input: f64) -> f64;

    /// `∂f/∂x`
    fn d_state(&self, x: f64, input: f64) -> f64;

    /// `∂^order f/∂I^order`, `order ≥ 1`.
    fn d_input(&self, x: f64, input: f64, order: u32) -> f64;

    /// Interval searched for the fixed point of `x = f(x, 0)`.
    fn fixed_point_bracket(&self) -> (f64, f64);

    /// Lipschitz constant of `f` in the input argument, when globally finite.
    fn input_lipschitz(&self) -> Option<f64> {
        None
    }

    /// Range `[lo, hi]` of `f`, when bounded.
    fn range(&self) -> Option<(f64, f64)> {
        None
    }
}

/// `f(x, I) = η sin²(x + γ I + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ikeda {
    pub eta: f64,
    pub gamma: f64,
    pub phi: f64,
}

impl Ikeda {
    /// Kernel parameters used throughout the volatility experiments.
    pub const BENCHMARK: Ikeda = Ikeda { eta: 0.461, gamma: 2.866, phi: 1.124 };

    fn arg(&self, x: f64, input: f64) -> f64 {
        x + self.gamma * input + self.phi
    }
}

impl Kernel for Ikeda {
    fn eval(&self, x: f64, input: f64) -> f64 {
        let s = self.arg(x, input).sin();
        self.eta * s * s
    }

    fn d_state(&self, x: f64, input: f64) -> f64 {
        self.eta * (2.0 * self.arg(x, input)).sin()
    }

    fn d_input(&self, x: f64, input: f64, order: u32) -> f64 {
        // f = (η/2)(1 - cos 2u): the n-th derivative of -cos(2u) shifts the phase by nπ/2
        let u2 = 2.0 * self.arg(x, input);
        let phase = match order % 4 {
            0 => u2.cos(),
            1 => -u2.sin(),
            2 => -u2.cos(),
            _ => u2.sin(),
        };
        -(self.eta / 2.0) * (2.0 * self.gamma).powi(order as i32) * phase
    }

    fn fixed_point_bracket(&self) -> (f64, f64) {
        (-self.eta.abs() - 1.0, self.eta.abs() + 1.0)
    }

    fn input_lipschitz(&self) -> Option<f64> {
        Some((self.eta * self.gamma).abs())
    }

    fn range(&self) -> Option<(f64, f64)> {
        Some((self.eta.min(0.0), self.eta.max(0.0)))
    }
}

/// `f(x, I) = a x + b I + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Kernel for Affine {
    fn eval(&self, x: f64, input: f64) -> f64 {
        self.a * x + self.b * input + self.c
    }

    fn d_state(&self, _x: f64, _input: f64) -> f64 {
        self.a
    }

    fn d_input(&self, _x: f64, _input: f64, order: u32) -> f64 {
        if order == 1 {
            self.b
        } else {
            0.0
        }
    }

    fn fixed_point_bracket(&self) -> (f64, f64) {
        if (1.0 - self.a).abs() > 1e-12 {
            let root = self.c / (1.0 - self.a);
            (root - 1.0 - root.abs(), root + 1.0 + root.abs())
        } else {
            (-1.0, 1.0)
        }
    }

    fn input_lipschitz(&self) -> Option<f64> {
        Some(self.b.abs())
    }
}

/// Kernels selectable from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    Ikeda(Ikeda),
    Affine(Affine),
}

impl Kernel for KernelSpec {
    fn eval(&self, x: f64, input: f64) -> f64 {
        match self {
            KernelSpec::Ikeda(k) => k.eval(x, input),
            KernelSpec::Affine(k) => k.eval(x, input),
        }
    }

    fn d_state(&self, x: f64, input: f64) -> f64 {
        match self {
            KernelSpec::Ikeda(k) => k.d_state(x, input),
            KernelSpec::Affine(k) => k.d_state(x, input),
        }
    }

    fn d_input(&self, x: f64, input: f64, order: u32) -> f64 {
        match self {
            KernelSpec::Ikeda(k) => k.d_input(x, input, order),
            KernelSpec::Affine(k) => k.d_input(x, input, order),
        }
    }

    fn fixed_point_bracket(&self) -> (f64, f64) {
        match self {
            KernelSpec::Ikeda(k) => k.fixed_point_bracket(),
            KernelSpec::Affine(k) => k.fixed_point_bracket(),
        }
    }

    fn input_lipschitz(&self) -> Option<f64> {
        match self {
            KernelSpec::Ikeda(k) => k.input_lipschitz(),
            KernelSpec::Affine(k) => k.input_lipschitz(),
        }
    }

    fn range(&self) -> Option<(f64, f64)> {
        match self {
            KernelSpec::Ikeda(k) => k.range(),
            KernelSpec::Affine(k) => k.range(),
        }
    }
}

// ---------------------------------------------------------------------------
// Reservoir abstraction and state paths
// ---------------------------------------------------------------------------

/// A state-space filter `x(t) = F(x(t-1), z(t))` on `R^N`.
pub trait Reservoir: Send + Sync {
    fn dim(&self) -> usize;

    /// Write `F(prev, z)` into `next`.
    fn step_into(&self, prev: &[f64], z: f64, next: &mut [f64]);
}

/// Reservoir states, one row per input time.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    data: Vec<f64>,
    dim: usize,
    origin: i64,
}

impl StatePath {
    pub fn new(data: Vec<f64>, dim: usize, origin: i64) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot form rows of width {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: origin + (i / dim) as i64 });
        }
        Ok(Self { data, dim, origin })
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

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn end(&self) -> i64 {
        self.origin + self.len() as i64
    }

    /// State at row `k` (time `origin + k`).
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// State at time label `t`.
    pub fn at(&self, t: i64) -> Option<&[f64]> {
        (t >= self.origin && t < self.end()).then(|| self.row((t - self.origin) as usize))
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.len() - 1)
    }

    /// Neuron `i` over time.
    pub fn neuron(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.data[k * self.dim + i]).collect()
    }

    /// Rows with time labels in `[from, to)`.
    pub fn window(&self, from: i64, to: i64) -> Result<Self> {
        let lo = from.max(self.origin);
        let hi = to.min(self.end());
        if hi <= lo {
            return Err(Error::InsufficientData("empty state window".into()));
        }
        let a = (lo - self.origin) as usize * self.dim;
        let b = (hi - self.origin) as usize * self.dim;
        Ok(Self { data: self.data[a..b].to_vec(), dim: self.dim, origin: lo })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv write failed: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        w.write_record(&header).map_err(io)?;
        for k in 0..self.len() {
            let mut rec = vec![(self.origin + k as i64).to_string()];
            rec.extend(self.row(k).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidArgument(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// Drive `reservoir` with `input` starting from `x_init` (the state at the
/// time before the first input).
pub fn run_reservoir<R: Reservoir + ?Sized>(reservoir: &R, input: &TimeSeries, x_init: &[f64]) -> Result<StatePath> {
    let n = reservoir.dim();
    if x_init.len() != n {
        return Err(Error::DimensionMismatch(format!("initial state has {} entries, reservoir {n}", x_init.len())));
    }
    let len = input.len();
    let mut data = vec![0.0; len * n];
    let mut prev = x_init.to_vec();
    for (k, &z) in input.values().iter().enumerate() {
        let next = &mut data[k * n..(k + 1) * n];
        reservoir.step_into(&prev, z, next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: input.origin() + k as i64 });
        }
        prev.copy_from_slice(next);
    }
    Ok(StatePath { data, dim: n, origin: input.origin() })
}

// ---------------------------------------------------------------------------
// TDR parameters and simulation
// ---------------------------------------------------------------------------

/// Reservoir size, neuron separation, kernel and input mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdrParams<K = KernelSpec> {
    pub d: f64,
    pub kernel: K,
    pub mask: Vec<f64>,
}

impl<K: Kernel> TdrParams<K> {
    pub fn new(d: f64, kernel: K, mask: Vec<f64>) -> Result<Self> {
        let p = Self { d, kernel, mask };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mask.is_empty() {
            return Err(Error::InvalidModel("reservoir needs at least one neuron".into()));
        }
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(Error::InvalidModel(format!("neuron separation {} must be positive", self.d)));
        }
        if self.mask.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite mask entry".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    /// `ξ = ln(1 + d)`
    pub fn xi(&self) -> f64 {
        self.d.ln_1p()
    }

    /// `e^{-ξ} = 1/(1 + d)`
    pub fn leak(&self) -> f64 {
        1.0 / (1.0 + self.d)
    }
}

impl<K: Kernel> Reservoir for TdrParams<K> {
    fn dim(&self) -> usize {
        self.n()
    }

    fn step_into(&self, prev: &[f64], z: f64, next: &mut [f64]) {
        let leak = self.leak();
        let gain = 1.0 - leak;
        let mut left = prev[prev.len() - 1];
        for i in 0..self.mask.len() {
            let v = leak * left + gain * self.kernel.eval(prev[i], self.mask[i] * z);
            next[i] = v;
            left = v;
        }
    }
}

/// Uniform `[-1, 1]` input mask drawn from the `tdr/mask` stream of `seed`.
pub fn generate_mask(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, "tdr/mask");
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// One reservoir update.
pub fn tdr_step<K: Kernel>(x_prev: &[f64], z: f64, params: &TdrParams<K>) -> Result<Vec<f64>> {
    if x_prev.len() != params.n() {
        return Err(Error::DimensionMismatch(format!("state has {} entries, reservoir {}", x_prev.len(), params.n())));
    }
    let mut next = vec![0.0; params.n()];
    params.step_into(x_prev, z, &mut next);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t: 0 });
    }
    Ok(next)
}

pub fn tdr_run<K: Kernel>(input: &TimeSeries, params: &TdrParams<K>, x_init: &[f64]) -> Result<StatePath> {
    params.validate()?;
    run_reservoir(params, input, x_init)
}

// ---------------------------------------------------------------------------
// Fixed point and linearization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub x0: f64,
    /// `|∂x f(x0, 0)| < 1`
    pub stable: bool,
    pub residual: f64,
}

/// Solve `x0 = f(x0, 0)` by Newton steps safeguarded with bisection on a
/// sign-changing bracket.
pub fn solve_fixed_point<K: Kernel + ?Sized>(kernel: &K, bracket: Option<(f64, f64)>) -> Result<FixedPoint> {
    let (mut lo, mut hi) = bracket.unwrap_or_else(|| kernel.fixed_point_bracket());
    let g = |x: f64| x - kernel.eval(x, 0.0);
    let (mut glo, ghi) = (g(lo), g(hi));
    let finish = |x: f64| {
        let residual = (x - kernel.eval(x, 0.0)).abs();
        FixedPoint { x0: x, stable: kernel.d_state(x, 0.0).abs() < 1.0, residual }
    };
    if glo == 0.0 {
        return Ok(finish(lo));
    }
    if ghi == 0.0 {
        return Ok(finish(hi));
    }
    if glo.signum() == ghi.signum() {
        return Err(Error::NoConvergence(format!("no sign change of x - f(x, 0) on [{lo}, {hi}]")));
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gx = g(x);
        if gx.abs() < 1e-14 {
            return Ok(finish(x));
        }
        if gx.signum() == glo.signum() {
            lo = x;
            glo = gx;
        } else {
            hi = x;
        }
        let dg = 1.0 - kernel.d_state(x, 0.0);
        let newton = x - gx / dg;
        let next = if dg != 0.0 && newton > lo.min(hi) && newton < lo.max(hi) {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x || (hi - lo).abs() < 4.0 * f64::EPSILON * x.abs().max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    let fp = finish(x);
    if fp.residual < 1e-12 {
        Ok(fp)
    } else {
        Err(Error::NoConvergence(format!("fixed-point residual {} after iteration budget", fp.residual)))
    }
}

/// Jacobian `A = D_x F(x0·1, 0)` of the full reservoir map.
pub fn build_jacobian<K: Kernel>(params: &TdrParams<K>, x0: f64) -> DMatrix<f64> {
    let n = params.n();
    let leak = params.leak();
    let gain = 1.0 - leak;
    let fx = params.kernel.d_state(x0, 0.0);
    DMatrix::from_fn(n, n, |r, c| {
        // 1-based neuron indices j = r+1, k = c+1
        let (j, k) = (r as i32 + 1, c as i32 + 1);
        let mut v = 0.0;
        if c == n - 1 {
            v += leak.powi(j);
        }
        if k <= j {
            v += gain * leak.powi(j - k) * fx;
        }
        v
    })
}

/// Coefficients of the per-neuron input polynomials
/// `ε_j(z) = Σ_{r=1..R} a_r^j z^r`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPolynomials {
    /// `coeffs[(j, r-1)] = a_r^j`
    coeffs: DMatrix<f64>,
}

impl InputPolynomials {
    pub fn from_matrix(coeffs: DMatrix<f64>) -> Self {
        Self { coeffs }
    }

    pub fn order(&self) -> u32 {
        self.coeffs.ncols() as u32
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    /// `N × R` coefficient matrix `P` with `ε(z) = P (z, z², …, z^R)ᵀ`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn eval(&self, z: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(z, out.as_mut_slice());
        out
    }

    pub fn eval_into(&self, z: f64, out: &mut [f64]) {
        out.fill(0.0);
        let mut zp = 1.0;
        for r in 0..self.coeffs.ncols() {
            zp *= z;
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.coeffs[(j, r)] * zp;
            }
        }
    }
}

pub fn build_input_polynomials<K: Kernel>(params: &TdrParams<K>, x0: f64, order: u32) -> Result<InputPolynomials> {
    if order == 0 {
        return Err(Error::InvalidArgument("polynomial order must be at least 1".into()));
    }
    let n = params.n();
    let leak = params.leak();
    let gain = 1.0 - leak;
    let mut coeffs = DMatrix::zeros(n, order as usize);
    let mut factorial = 1.0;
    for r in 1..=order {
        factorial *= f64::from(r);
        let b = params.kernel.d_input(x0, 0.0, r) / factorial;
        // running sum Σ_{k≤j} e^{-(j-k)ξ} c_k^r
        let mut acc = 0.0;
        for j in 0..n {
            acc = leak * acc + params.mask[j].powi(r as i32);
            coeffs[(j, r as usize - 1)] = gain * b * acc;
        }
    }
    Ok(InputPolynomials { coeffs })
}

// ---------------------------------------------------------------------------
// Ridge readout
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    pub lambda: f64,
    #[serde(default = "ReadoutConfig::default_washout")]
    pub washout: usize,
}

impl ReadoutConfig {
    fn default_washout() -> usize {
        200
    }

    pub fn new(lambda: f64) -> Self {
        Self { lambda, washout: Self::default_washout() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    #[serde(default)]
    pub mask_seed: Option<u64>,
}

impl Readout {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Sample second moments of aligned states and teaching signal; solving for
/// several ridge constants reuses them.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    pub gamma: DMatrix<f64>,
    pub cov: DVector<f64>,
    pub mean_x: DVector<f64>,
    pub mean_y: f64,
    pub var_y: f64,
    pub samples: usize,
}

/// Time labels shared by a state path (after dropping `washout` rows) and a
/// teaching signal.
fn aligned_range(states: &StatePath, teaching: &TimeSeries, washout: usize) -> Result<(i64, i64)> {
    let from = states.origin() + washout as i64;
    let lo = from.max(teaching.origin());
    let hi = states.end().min(teaching.end());
    if hi <= lo {
        return Err(Error::InsufficientData("states and teaching signal do not overlap after washout".into()));
    }
    Ok((lo, hi))
}

impl RidgeProblem {
    pub fn from_samples(states: &StatePath, teaching: &TimeSeries, washout: usize) -> Result<Self> {
        let (lo, hi) = aligned_range(states, teaching, washout)?;
        let n = states.dim();
        let count = (hi - lo) as usize;
        if count < n + 1 {
            return Err(Error::InsufficientData(format!("{count} aligned samples for {n} neurons")));
        }
        let y = &teaching.values()[(lo - teaching.origin()) as usize..(hi - teaching.origin()) as usize];
        let k0 = (lo - states.origin()) as usize;
        let mut mean_x = DVector::zeros(n);
        for k in 0..count {
            for (m, v) in mean_x.iter_mut().zip(states.row(k0 + k)) {
                *m += v;
            }
        }
        mean_x /= count as f64;
        let mean_y = y.iter().sum::<f64>() / count as f64;
        let mut gamma = DMatrix::zeros(n, n);
        let mut cov = DVector::zeros(n);
        let mut var_y = 0.0;
        let mut c = vec![0.0; n];
        for k in 0..count {
            for ((ci, v), m) in c.iter_mut().zip(states.row(k0 + k)).zip(mean_x.iter()) {
                *ci = v - m;
            }
            let dy = y[k] - mean_y;
            var_y += dy * dy;
            for i in 0..n {
                cov[i] += c[i] * dy;
                let ci = c[i];
                for j in 0..=i {
                    gamma[(i, j)] += ci * c[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                gamma[(j, i)] = gamma[(i, j)];
            }
        }
        let scale = 1.0 / count as f64;
        Ok(Self {
            gamma: gamma * scale,
            cov: cov * scale,
            mean_x,
            mean_y,
            var_y: var_y * scale,
            samples: count,
        })
    }

    /// `W = (Γ + λI)⁻¹ cov`, `a = ȳ - Wᵀ x̄`.
    pub fn solve(&self, lambda: f64) -> Result<Readout> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("ridge constant {lambda} must be non-negative")));
        }
        let n = self.gamma.nrows();
        let m = &self.gamma + DMatrix::identity(n, n) * lambda;
        let chol = m.clone().cholesky().ok_or_else(|| {
            Error::SingularSystem("state covariance plus ridge is not positive definite".into())
        })?;
        if lambda == 0.0 {
            let l = chol.l_dirty();
            let dmax = (0..n).map(|i| self.gamma[(i, i)]).fold(0.0, f64::max);
            let dmin = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            if !(dmin > 1e-13 * dmax) {
                return Err(Error::SingularSystem("state covariance is rank deficient".into()));
            }
        }
        let w = chol.solve(&self.cov);
        let intercept = self.mean_y - w.dot(&self.mean_x);
        Ok(Readout { weights: w.iter().copied().collect(), intercept, lambda, mask_seed: None })
    }

    /// In-sample mean squared error of `readout` from the stored moments.
    pub fn mse(&self, readout: &Readout) -> f64 {
        let w = DVector::from_column_slice(&readout.weights);
        let bias = readout.intercept + w.dot(&self.mean_x) - self.mean_y;
        self.var_y - 2.0 * w.dot(&self.cov) + (w.transpose() * &self.gamma * &w)[(0, 0)] + bias * bias
    }

    pub fn nmse(&self, readout: &Readout) -> Result<f64> {
        if !(self.var_y > 0.0) {
            return Err(Error::ZeroVarianceTeaching);
        }
        Ok(self.mse(readout) / self.var_y)
    }
}

pub fn train_readout(states: &StatePath, teaching: &TimeSeries, cfg: &ReadoutConfig) -> Result<Readout> {
    RidgeProblem::from_samples(states, teaching, cfg.washout)?.solve(cfg.lambda)
}

/// Readout residual mean square divided by the teaching variance, over all
/// time labels shared by `states` and `teaching`.
pub fn evaluate_nmse(states: &StatePath, readout: &Readout, teaching: &TimeSeries) -> Result<f64> {
    if readout.weights.len() != states.dim() {
        return Err(Error::DimensionMismatch("readout and states differ in dimension".into()));
    }
    let (lo, hi) = aligned_range(states, teaching, 0)?;
    let y = &teaching.values()[(lo - teaching.origin()) as usize..(hi - teaching.origin()) as usize];
    let k0 = (lo - states.origin()) as usize;
    let n = y.len() as f64;
    let mean_y = y.iter().sum::<f64>() / n;
    let var_y = y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / n;
    if !(var_y > 0.0) {
        return Err(Error::ZeroVarianceTeaching);
    }
    let mse = y
        .iter()
        .enumerate()
        .map(|(k, yk)| (readout.predict(states.row(k0 + k)) - yk).powi(2))
        .sum::<f64>()
        / n;
    Ok(mse / var_y)
}

/// Reported capacity `1 - NMSE` clamped to `[0, 1]`.
pub fn empirical_capacity(nmse: f64) -> f64 {
    (1.0 - nmse).clamp(0.0, 1.0)
}

/// Time labels of a state path and teaching signal, intersected.
pub fn common_range(states: &StatePath, teaching: &TimeSeries) -> Option<(i64, i64)> {
    let s = TimeSeries::new(vec![0.0; states.len()], states.origin()).ok()?;
    overlap(&s, teaching)
}

/// Spectral radius of the reservoir Jacobian at its fixed point.
pub fn jacobian_spectral_radius<K: Kernel>(params: &TdrParams<K>, x0: f64) -> f64 {
    linalg::spectral_radius(&build_jacobian(params, x0))
}
