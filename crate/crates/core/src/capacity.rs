//! Linearized reservoir model and closed-form capacities.
//!
//! Around a stable fixed point the reservoir is replaced by
//!
//! ```text
//! x(t) = x0 + A (x(t-1) - x0) + ε(t),   ε_j(t) = Σ_{r=1..R} a_r^j z(t)^r
//! ```
//!
//! whose stationary first and second moments, and its covariance with linear,
//! quadratic and filtering teaching signals, follow from automoments of the
//! input. The optimal ridge readout capacity is then a pair of linear solves.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, max_abs, max_abs_vec, symmetrize};
use crate::series::{AutomomentProvider, ComomentTable, MomentSpec, TimeSeries};
use crate::tdr::{
    build_input_polynomials, build_jacobian, run_reservoir, solve_fixed_point, InputPolynomials, Kernel,
    Reservoir, StatePath, TdrParams,
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirModel {
    x0: DVector<f64>,
    a: DMatrix<f64>,
    poly: InputPolynomials,
    spectral_radius: f64,
}

impl ReservoirModel {
    pub fn new(x0: DVector<f64>, a: DMatrix<f64>, poly: InputPolynomials) -> Result<Self> {
        let n = x0.len();
        if n == 0 || a.nrows() != n || a.ncols() != n || poly.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "fixed point has {n} entries, A is {}x{}, polynomials cover {} neurons",
                a.nrows(),
                a.ncols(),
                poly.dim()
            )));
        }
        if poly.order() == 0 {
            return Err(Error::InvalidModel("input polynomials need order R >= 1".into()));
        }
        if x0.iter().chain(a.iter()).chain(poly.matrix().iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite model coefficient".into()));
        }
        let rho = linalg::spectral_radius(&a);
        if !(rho < 1.0) {
            return Err(Error::InvalidModel(format!("spectral radius {rho} of A is not below 1")));
        }
        Ok(Self { x0, a, poly, spectral_radius: rho })
    }

    /// Linearize a time-delay reservoir at its uniform fixed point with input
    /// polynomials of order `order`.
    pub fn from_tdr<K: Kernel>(params: &TdrParams<K>, order: u32) -> Result<Self> {
        params.validate()?;
        let fp = solve_fixed_point(&params.kernel, None)?;
        let a = build_jacobian(params, fp.x0);
        let poly = build_input_polynomials(params, fp.x0, order)?;
        Self::new(DVector::from_element(params.n(), fp.x0), a, poly)
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn poly(&self) -> &InputPolynomials {
        &self.poly
    }

    pub fn order(&self) -> u32 {
        self.poly.order()
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    /// `ε(z)`
    pub fn epsilon(&self, z: f64) -> DVector<f64> {
        self.poly.eval(z)
    }
}

impl Reservoir for ReservoirModel {
    fn dim(&self) -> usize {
        self.x0.len()
    }

    fn step_into(&self, prev: &[f64], z: f64, next: &mut [f64]) {
        self.poly.eval_into(z, next);
        let n = self.x0.len();
        for j in 0..n {
            let mut v = self.x0[j];
            for k in 0..n {
                v += self.a[(j, k)] * (prev[k] - self.x0[k]);
            }
            next[j] += v;
        }
    }
}

/// Iterate the model recursion from `x0`.
pub fn simulate_model_recursion(model: &ReservoirModel, input: &TimeSeries) -> Result<StatePath> {
    run_reservoir(model, input, model.x0.as_slice())
}

pub fn simulate_model_recursion_from(model: &ReservoirModel, input: &TimeSeries, init: &[f64]) -> Result<StatePath> {
    run_reservoir(model, input, init)
}

// ---------------------------------------------------------------------------
// Truncation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPolicy {
    /// Relative size below which a series increment ends the summation.
    pub tol: f64,
    /// Largest matrix power index allowed.
    pub k_max: usize,
    /// Largest input lag entering `Γ_ε` and comoment sums.
    pub h_max: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { tol: 1e-10, k_max: 2000, h_max: 50 }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.k_max == 0 {
            return Err(Error::InvalidArgument("truncation needs tol > 0 and k_max >= 1".into()));
        }
        Ok(())
    }

    fn lag_limit(&self, moments: &dyn AutomomentProvider) -> usize {
        moments.horizon().map_or(self.h_max, |h| h.min(self.h_max))
    }
}

/// A truncated series value and the number of terms summed.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated<T> {
    pub value: T,
    pub terms: usize,
}

fn negligible_power(power: &DMatrix<f64>, tol: f64) -> bool {
    power.nrows() as f64 * max_abs(power) < tol
}

// ---------------------------------------------------------------------------
// Innovation moments
// ---------------------------------------------------------------------------

/// `μ_ε = P (μ_z^1, …, μ_z^R)ᵀ`
pub fn epsilon_mean(model: &ReservoirModel, moments: &dyn AutomomentProvider) -> Result<DVector<f64>> {
    let m = DVector::from_vec(moments.marginal_moments(model.order())?);
    Ok(model.poly.matrix() * m)
}

/// `Γ_ε(h) = E[(ε(t) - μ_ε)(ε(t+h) - μ_ε)ᵀ]`
pub fn epsilon_autocovariance(model: &ReservoirModel, moments: &dyn AutomomentProvider, h: i64) -> Result<DMatrix<f64>> {
    let mu = epsilon_mean(model, moments)?;
    epsilon_autocovariance_centered(model, moments, h, &mu)
}

fn epsilon_autocovariance_centered(
    model: &ReservoirModel,
    moments: &dyn AutomomentProvider,
    h: i64,
    mu_eps: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.dim();
    if moments.horizon().is_some_and(|hz| h.unsigned_abs() as usize > hz) {
        return Ok(DMatrix::zeros(n, n));
    }
    let p = model.poly.matrix();
    let m = moments.pair_moments(model.order(), h)?;
    Ok(p * m * p.transpose() - mu_eps * mu_eps.transpose())
}

// ---------------------------------------------------------------------------
// State moments
// ---------------------------------------------------------------------------

/// `μ_x = x0 + (I - A)⁻¹ μ_ε`
pub fn state_mean(model: &ReservoirModel, moments: &dyn AutomomentProvider) -> Result<DVector<f64>> {
    let mu_eps = epsilon_mean(model, moments)?;
    state_mean_from(model, &mu_eps)
}

fn state_mean_from(model: &ReservoirModel, mu_eps: &DVector<f64>) -> Result<DVector<f64>> {
    let n = model.dim();
    let shift = linalg::solve_lu(&(DMatrix::identity(n, n) - &model.a), mu_eps)?;
    Ok(&model.x0 + shift)
}

/// `Σ_{k≥0} A^k Q (A^k)ᵀ` by repeated squaring: after `n` rounds the sum
/// holds the first `2^n` terms.
pub fn lyapunov_series(a: &DMatrix<f64>, q: &DMatrix<f64>, policy: &TruncationPolicy) -> Result<Truncated<DMatrix<f64>>> {
    policy.validate()?;
    let mut sum = q.clone();
    let mut power = a.clone();
    let mut terms = 1usize;
    loop {
        let increment = &power * &sum * power.transpose();
        sum += &increment;
        terms *= 2;
        if max_abs(&increment) <= policy.tol * max_abs(&sum).max(f64::MIN_POSITIVE) {
            return Ok(Truncated { value: symmetrize(&sum), terms });
        }
        if terms >= policy.k_max {
            return Err(Error::TruncationBudgetExceeded { k_max: policy.k_max });
        }
        power = &power * &power;
    }
}

/// Stationary state covariance `Γ(0)`.
///
/// The double series `Σ_{j,k} A^j Γ_ε(j-k) (A^k)ᵀ` is regrouped by the lag
/// `m = j - k`, giving a Lyapunov series with source
/// `Γ_ε(0) + Σ_{m≥1} (A^m Γ_ε(m) + (A^m Γ_ε(m))ᵀ)`.
pub fn state_autocovariance0(
    model: &ReservoirModel,
    moments: &dyn AutomomentProvider,
    policy: &TruncationPolicy,
) -> Result<Truncated<DMatrix<f64>>> {
    let mu_eps = epsilon_mean(model, moments)?;
    let q = lyapunov_source(model, moments, policy, &mu_eps)?;
    lyapunov_series(&model.a, &q, policy)
}

fn lyapunov_source(
    model: &ReservoirModel,
    moments: &dyn AutomomentProvider,
    policy: &TruncationPolicy,
    mu_eps: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let mut q = epsilon_autocovariance_centered(model, moments, 0, mu_eps)?;
    let mut power = DMatrix::identity(model.dim(), model.dim());
    for m in 1..=policy.lag_limit(moments) {
        power = &model.a * &power;
        if negligible_power(&power, policy.tol) {
            break;
        }
        let t = &power * epsilon_autocovariance_centered(model, moments, m as i64, mu_eps)?;
        q += &t + t.transpose();
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// Task covariances
// ---------------------------------------------------------------------------

/// Sum `Σ_k A^k w_k` where `w_k` vanishes for `k > k_end` (when known) and is
/// bounded otherwise.
fn power_series(
    model: &ReservoirModel,
    policy: &TruncationPolicy,
    k_end: Option<usize>,
    mut w: impl FnMut(usize) -> Result<DVector<f64>>,
) -> Result<Truncated<DVector<f64>>> {
    policy.validate()?;
    let n = model.dim();
    let mut acc = DVector::zeros(n);
    let mut power = DMatrix::identity(n, n);
    for k in 0..=policy.k_max {
        if k_end.is_some_and(|e| k > e) || (k > 0 && negligible_power(&power, policy.tol)) {
            return Ok(Truncated { value: acc, terms: k });
        }
        acc += &power * w(k)?;
        power = &model.a * &power;
    }
    Err(Error::TruncationBudgetExceeded { k_max: policy.k_max })
}

fn check_task_len(len: usize, f: usize, h: usize) -> Result<()> {
    if len != f + h + 1 {
        return Err(Error::DimensionMismatch(format!("task of size {len} does not match f + h + 1 = {}", f + h + 1)));
    }
    Ok(())
}

/// `var y` for `y(t) = Σ_j L_j z(t + f + 1 - j)`.
pub fn linear_task_variance(moments: &dyn AutomomentProvider, l: &[f64]) -> Result<f64> {
    let mu = moments.moment(&MomentSpec::single(1))?;
    let mut v = 0.0;
    for (j, lj) in l.iter().enumerate() {
        for (k, lk) in l.iter().enumerate() {
            if *lj != 0.0 && *lk != 0.0 {
                v += lj * lk * (moments.moment(&MomentSpec::pair(1, 1, j as i64 - k as i64))? - mu * mu);
            }
        }
    }
    Ok(v)
}

/// `Cov(y(t), x(t))` for the linear task `y(t) = Σ_{j=1..f+h+1} L_j z(t + f + 1 - j)`.
///
/// `Cov(z(t+f+1-j), ε_i(t-k)) = Σ_s a_s^i μ_z^{1,s}(j - k - f - 1) - μ_z μ_ε^i`.
pub fn linear_task_cov(
    model: &ReservoirModel,
    moments: &dyn AutomomentProvider,
    l: &[f64],
    f: usize,
    h: usize,
    policy: &TruncationPolicy,
) -> Result<Truncated<DVector<f64>>> {
    check_task_len(l.len(), f, h)?;
    let r = model.order();
    let p = model.poly.matrix();
    let mu_z = moments.moment(&MomentSpec::single(1))?;
    let mu_eps = epsilon_mean(model, moments)?;
    let k_end = moments.horizon().map(|hz| h + hz);
    power_series(model, policy, k_end, |k| {
        let mut w = DVector::zeros(model.dim());
        for (j0, &lj) in l.iter().enumerate() {
            if lj == 0.0 {
                continue;
            }
            let lag = (j0 + 1) as i64 - k as i64 - f as i64 - 1;
            let m = DVector::from_iterator(
                r as usize,
                (1..=r).map(|s| moments.moment(&MomentSpec::pair(1, s, lag))).collect::<Result<Vec<_>>>()?,
            );
            w += (p * m - &mu_eps * mu_z) * lj;
        }
        Ok(w)
    })
}

/// Mean and variance of `y(t) = Σ_{ij} Q_ij z(t+f+1-i) z(t+f+1-j)`.
pub fn quadratic_task_moments(moments: &dyn AutomomentProvider, q: &DMatrix<f64>) -> Result<(f64, f64)> {
    let n = q.nrows();
    let idx = |i: usize| i as i64;
    let mut mean = 0.0;
    for i in 0..n {
        for j in 0..n {
            if q[(i, j)] != 0.0 {
                mean += q[(i, j)] * moments.moment(&MomentSpec::pair(1, 1, idx(i) - idx(j)))?;
            }
        }
    }
    let mut second = 0.0;
    for i in 0..n {
        for j in 0..n {
            let qij = q[(i, j)];
            if qij == 0.0 {
                continue;
            }
            for k in 0..n {
                for l in 0..n {
                    let qkl = q[(k, l)];
                    if qkl == 0.0 {
                        continue;
                    }
                    let spec = MomentSpec::new(vec![1, 1, 1, 1], vec![idx(i) - idx(j), idx(i) - idx(k), idx(i) - idx(l)])?;
                    second += qij * qkl * moments.moment(&spec)?;
                }
            }
        }
    }
    Ok((mean, second - mean * mean))
}

/// `var y` and `Cov(y(t), x(t))` for the quadratic task with symmetric `Q`.
///
/// `Cov(z(t+f+1-i) z(t+f+1-j), ε(t-k)) = P (μ_z^{1,1,s}(i-j, i-k-f-1))_s - μ_y μ_ε`
/// with 1-based `i, j`.
pub fn quadratic_task_cov(
    model: &ReservoirModel,
    moments: &dyn AutomomentProvider,
    q: &DMatrix<f64>,
    f: usize,
    h: usize,
    policy: &TruncationPolicy,
) -> Result<(f64, Truncated<DVector<f64>>)> {
    if q.nrows() != q.ncols() {
        return Err(Error::DimensionMismatch("task matrix must be square".into()));
    }
    check_task_len(q.nrows(), f, h)?;
    let q = symmetrize(q);
    let (mu_y, var_y) = quadratic_task_moments(moments, &q)?;
    let r = model.order();
    let p = model.poly.matrix();
    let mu_eps = epsilon_mean(model, moments)?;
    let n = q.nrows();
    let k_end = moments.horizon().map(|hz| h + hz);
    let cov = power_series(model, policy, k_end, |k| {
        let mut m = DVector::zeros(r as usize);
        for i in 0..n {
            for j in 0..n {
                let qij = q[(i, j)];
                if qij == 0.0 {
                    continue;
                }
                // 0-based i: the factor is z(t+f-i), so ε(t-k) sits at lag i-k-f
                let l1 = i as i64 - j as i64;
                let l2 = i as i64 - k as i64 - f as i64;
                for s in 1..=r {
                    m[s as usize - 1] += qij * moments.moment(&MomentSpec::new(vec![1, 1, s], vec![l1, l2])?)?;
                }
            }
        }
        Ok(p * m - &mu_eps * mu_y)
    })?;
    Ok((var_y, cov))
}

/// `Cov(y(t), x(t)) = Σ_{j≥0} A^j (u_j - μ_y μ_ε)` with
/// `(u_j)_i = Σ_r a_r^i μ_{y,z}^r(-j)`.
///
/// Comoments are read up to `min(h_max, stored window)`; beyond that `y` and
/// the input are independent and the remaining tail is summed in closed form.
/// With `center_on_input_mean` the centering uses `μ_z μ_ε` instead of `μ_y μ_ε`.
pub fn filter_task_cov(
    model: &ReservoirModel,
    comoments: &ComomentTable,
    mean_z: f64,
    mu_eps: &DVector<f64>,
    policy: &TruncationPolicy,
    center_on_input_mean: bool,
) -> Result<Truncated<DVector<f64>>> {
    policy.validate()?;
    let r = model.order();
    if comoments.max_order() < r {
        return Err(Error::MissingMoment(format!("comoments of order {r}")));
    }
    let p = model.poly.matrix();
    let n = model.dim();
    let center = mu_eps * if center_on_input_mean { mean_z } else { comoments.mean_y() };
    let u = |j: i64| -> Result<DVector<f64>> {
        let m = DVector::from_iterator(
            r as usize,
            (1..=r).map(|s| comoments.get(s, -j)).collect::<Result<Vec<_>>>()?,
        );
        Ok(p * m - &center)
    };
    let last = (-comoments.lag_range().0).max(0) as usize;
    let last = last.min(policy.h_max).min(policy.k_max);
    let mut acc = DVector::zeros(n);
    let mut power = DMatrix::identity(n, n);
    for j in 0..=last {
        acc += &power * u(j as i64)?;
        power = &model.a * &power;
    }
    // Σ_{j>last} A^j c = A^{last+1} (I - A)⁻¹ c with c the factorized increment
    let tail_inc = {
        let m = DVector::from_iterator(
            r as usize,
            (1..=r).map(|s| comoments.mean_y() * comoments.input_moment(s).unwrap_or(0.0)),
        );
        p * m - &center
    };
    if max_abs_vec(&tail_inc) > 0.0 {
        let tail = linalg::solve_lu(&(DMatrix::identity(n, n) - &model.a), &tail_inc)?;
        acc += &power * tail;
    }
    Ok(Truncated { value: acc, terms: last + 1 })
}

// ---------------------------------------------------------------------------
// Capacity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityComponents {
    pub var_y: f64,
    pub cov_yx: Vec<f64>,
    pub gamma0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    /// Capacity clamped to `[0, 1]`.
    pub capacity: f64,
    pub capacity_unclamped: f64,
    /// Mean square error of the optimal readout, `var_y (1 - capacity_unclamped)`.
    pub mse: f64,
    /// Ratio of extreme eigenvalues of `Γ(0) + λI`.
    pub gamma0_condition: f64,
    pub truncation_terms_used: usize,
    pub components: CapacityComponents,
}

/// `C = covᵀ (Γ + λI)⁻¹ (Γ + 2λI) (Γ + λI)⁻¹ cov / var_y`.
pub fn capacity(gamma0: &DMatrix<f64>, cov_yx: &DVector<f64>, var_y: f64, lambda: f64) -> Result<CapacityReport> {
    let n = gamma0.nrows();
    if gamma0.ncols() != n || cov_yx.len() != n {
        return Err(Error::DimensionMismatch("Γ(0) and Cov(y, x) sizes differ".into()));
    }
    if !(var_y > 0.0) {
        return Err(Error::ZeroVarianceTeaching);
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge constant {lambda} must be non-negative")));
    }
    let eig = SymmetricEigen::new(symmetrize(gamma0));
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let low = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if low < -1e-8 * top {
        warn!("Γ(0) has eigenvalue {low:e} (largest {top:e}); flooring at zero");
    }
    let floored: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let min_floored = floored.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if lambda == 0.0 && !(min_floored > 1e-14 * top) {
        return Err(Error::SingularGamma);
    }
    let gamma = if low < 0.0 {
        let v = &eig.eigenvectors;
        symmetrize(&(v * DMatrix::from_diagonal(&DVector::from_vec(floored.clone())) * v.transpose()))
    } else {
        symmetrize(gamma0)
    };
    let shifted = &gamma + DMatrix::identity(n, n) * lambda;
    let chol = shifted.cholesky().ok_or(Error::SingularGamma)?;
    // v = (Γ + λI)⁻¹ cov;  numerator = vᵀ (Γ + 2λI) v = covᵀ v + λ |v|²
    let v = chol.solve(cov_yx);
    let numerator = cov_yx.dot(&v) + lambda * v.norm_squared();
    let unclamped = numerator / var_y;
    if !(-1e-8..=1.0 + 1e-8).contains(&unclamped) {
        warn!("capacity {unclamped} outside [0, 1]; clamping");
    }
    let condition = (top + lambda) / (min_floored + lambda);
    Ok(CapacityReport {
        capacity: unclamped.clamp(0.0, 1.0),
        capacity_unclamped: unclamped,
        mse: var_y - numerator,
        gamma0_condition: condition,
        truncation_terms_used: 0,
        components: CapacityComponents {
            var_y,
            cov_yx: cov_yx.iter().copied().collect(),
            gamma0: (0..n).map(|i| gamma0.row(i).iter().copied().collect()).collect(),
        },
    })
}

/// Teaching signal of a capacity evaluation.
#[derive(Debug, Clone)]
pub enum TaskSpec {
    /// `y(t) = Σ_j L_j z(t + f + 1 - j)`
    Linear { l: Vec<f64>, f: usize, h: usize },
    /// `y(t) = z^{f,h}(t)ᵀ Q z^{f,h}(t)`
    Quadratic { q: DMatrix<f64>, f: usize, h: usize },
    /// A signal known through its comoments with the input.
    Filter { comoments: ComomentTable, center_on_input_mean: bool },
}

/// Quadratic task matrix of size `f + h + 1` acting on the future block
/// `z(t+f), …, z(t+1)` only.
pub fn embed_forecast_block(block: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let f = block.nrows();
    let mut q = DMatrix::zeros(f + h + 1, f + h + 1);
    q.view_mut((0, 0), (f, f)).copy_from(block);
    q
}

/// Closed-form capacity of `model` for `task` with ridge constant `lambda`.
/// Second-order quantities entering the capacity of a task: `Γ(0)`,
/// `Cov(y, x)` and `var y`. Reusable across ridge constants.
#[derive(Debug, Clone)]
pub struct TaskMoments {
    pub gamma0: DMatrix<f64>,
    pub cov_yx: DVector<f64>,
    pub var_y: f64,
    pub terms: usize,
}

impl TaskMoments {
    pub fn capacity(&self, lambda: f64) -> Result<CapacityReport> {
        let mut report = capacity(&self.gamma0, &self.cov_yx, self.var_y, lambda)?;
        report.truncation_terms_used = self.terms;
        Ok(report)
    }

    /// Mean state variance `tr Γ(0) / N`, the scale for relative ridge constants.
    pub fn state_scale(&self) -> f64 {
        self.gamma0.trace() / self.gamma0.nrows() as f64
    }
}

pub fn task_moments(
    model: &ReservoirModel,
    moments: &dyn AutomomentProvider,
    task: &TaskSpec,
    policy: &TruncationPolicy,
) -> Result<TaskMoments> {
    let mu_eps = epsilon_mean(model, moments)?;
    let q = lyapunov_source(model, moments, policy, &mu_eps)?;
    let gamma = lyapunov_series(&model.a, &q, policy)?;
    let (var_y, cov) = match task {
        TaskSpec::Linear { l, f, h } => (linear_task_variance(moments, l)?, linear_task_cov(model, moments, l, *f, *h, policy)?),
        TaskSpec::Quadratic { q, f, h } => quadratic_task_cov(model, moments, q, *f, *h, policy)?,
        TaskSpec::Filter { comoments, center_on_input_mean } => {
            let mean_z = moments.moment(&MomentSpec::single(1))?;
            (comoments.var_y(), filter_task_cov(model, comoments, mean_z, &mu_eps, policy, *center_on_input_mean)?)
        }
    };
    Ok(TaskMoments { gamma0: gamma.value, cov_yx: cov.value, var_y, terms: gamma.terms.max(cov.terms) })
}

pub fn task_capacity(
    model: &ReservoirModel,
    moments: &dyn AutomomentProvider,
    task: &TaskSpec,
    policy: &TruncationPolicy,
    lambda: f64,
) -> Result<CapacityReport> {
    task_moments(model, moments, task, policy)?.capacity(lambda)
}
