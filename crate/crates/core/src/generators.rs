//! ARMA, GARCH(1,1) and ARSV data-generating processes together with their
//! forecasting targets and closed-form error measures.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, SimRng};
use crate::series::TimeSeries;

/// `E[log χ²_1]`
pub const LOG_CHI2_MEAN: f64 = -1.270_362_845_461_478_2;

/// Innovation law of a generator. Only Gaussian innovations are supported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Innovations {
    #[default]
    Gaussian,
}

impl Innovations {
    /// One draw with zero mean and unit variance.
    fn draw(self, rng: &mut SimRng) -> f64 {
        match self {
            Innovations::Gaussian => rng.sample(StandardNormal),
        }
    }
}

/// Roots of `1 + c1 z + … + ck z^k` all lie outside `|z| ≤ 1 + 1e-9`.
///
/// Equivalent to the companion matrix of the reversed polynomial having
/// spectral radius below `1/(1 + 1e-9)`.
fn roots_outside_unit_disk(coeffs: &[f64]) -> bool {
    let k = coeffs.len();
    if k == 0 {
        return true;
    }
    // reciprocal roots solve x^k + c1 x^{k-1} + … + ck = 0
    let mut comp = DMatrix::zeros(k, k);
    for j in 0..k {
        comp[(0, j)] = -coeffs[j];
    }
    for i in 1..k {
        comp[(i, i - 1)] = 1.0;
    }
    crate::linalg::spectral_radius(&comp) < 1.0 / (1.0 + 1e-9)
}

// ---------------------------------------------------------------------------
// ARMA
// ---------------------------------------------------------------------------

/// `z(t) = Σ φ_i z(t-i) + ζ(t) + Σ θ_j ζ(t-j)`, `ζ ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmaModel {
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    pub sigma2: f64,
    #[serde(default)]
    pub innovations: Innovations,
}

impl ArmaModel {
    pub fn new(phi: Vec<f64>, theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        let m = Self { phi, theta, sigma2, innovations: Innovations::Gaussian };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidModel(format!("innovation variance {} must be positive", self.sigma2)));
        }
        if self.phi.iter().chain(&self.theta).any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite ARMA coefficient".into()));
        }
        let neg_phi: Vec<f64> = self.phi.iter().map(|p| -p).collect();
        if !roots_outside_unit_disk(&neg_phi) {
            return Err(Error::InvalidModel("AR polynomial has a root inside the unit disk (not causal)".into()));
        }
        if !roots_outside_unit_disk(&self.theta) {
            return Err(Error::InvalidModel("MA polynomial has a root inside the unit disk (not invertible)".into()));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }

    pub fn q(&self) -> usize {
        self.theta.len()
    }

    pub fn default_burn_in(&self) -> usize {
        10 * self.p().max(self.q()) + 100
    }

    /// Autocovariance `γ(h) = σ² Σ_l ψ_l ψ_{l+|h|}` with the ψ-series cut
    /// once its tail is negligible.
    pub fn autocovariance(&self, max_lag: usize) -> Vec<f64> {
        let psi = arma_psi_weights(self, 20_000 + max_lag);
        (0..=max_lag)
            .map(|h| self.sigma2 * psi.iter().zip(&psi[h..]).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// Simulate an ARMA path. Returns `(z, ζ)` aligned on the same time labels.
pub fn arma_simulate(
    model: &ArmaModel,
    length: usize,
    seed: u64,
    burn_in: Option<usize>,
) -> Result<(TimeSeries, TimeSeries)> {
    model.validate()?;
    if length == 0 {
        return Err(Error::InvalidArgument("length must be at least 1".into()));
    }
    let burn = burn_in.unwrap_or_else(|| model.default_burn_in());
    let total = burn + length;
    let sd = model.sigma2.sqrt();
    let mut rng = stream(seed, "arma/innovations");
    let zeta: Vec<f64> = (0..total).map(|_| sd * model.innovations.draw(&mut rng)).collect();
    let mut z = vec![0.0; total];
    for t in 0..total {
        let mut v = zeta[t];
        for (i, p) in model.phi.iter().enumerate() {
            if t > i {
                v += p * z[t - i - 1];
            }
        }
        for (j, th) in model.theta.iter().enumerate() {
            if t > j {
                v += th * zeta[t - j - 1];
            }
        }
        z[t] = v;
    }
    Ok((
        TimeSeries::new(z[burn..].to_vec(), 0)?,
        TimeSeries::new(zeta[burn..].to_vec(), 0)?,
    ))
}

/// `ψ_0 = 1`, `ψ_j = θ_j + Σ_{i=1..min(j,p)} φ_i ψ_{j-i}`.
pub fn arma_psi_weights(model: &ArmaModel, count: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(count);
    for j in 0..count {
        if j == 0 {
            psi.push(1.0);
            continue;
        }
        let mut v = model.theta.get(j - 1).copied().unwrap_or(0.0);
        for i in 1..=j.min(model.p()) {
            v += model.phi[i - 1] * psi[j - i];
        }
        psi.push(v);
    }
    psi
}

/// Aggregation weights `w = (w_1, …, w_f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AggregationVector(Vec<f64>);

impl AggregationVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("aggregation vector needs f >= 1".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite aggregation weight".into()));
        }
        Ok(Self(w))
    }

    pub fn ones(f: usize) -> Result<Self> {
        Self::new(vec![1.0; f])
    }

    pub fn f(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `w_k` with 1-based `k`.
    pub fn at(&self, k: usize) -> f64 {
        self.0[k - 1]
    }
}

/// Mean square error of the best forecast of the aggregate
/// `Σ_{i=1..f} w_{f-i+1} z(T+i)` given information up to `T`.
pub fn arma_aggregate_msfe(model: &ArmaModel, w: &AggregationVector) -> f64 {
    let f = w.f();
    let psi = arma_psi_weights(model, f);
    let mut acc = 0.0;
    for i in 1..=f {
        let wi = w.at(f - i + 1);
        acc += wi * wi * psi[..i].iter().map(|p| p * p).sum::<f64>();
        for j in (i + 1)..=f {
            let wj = w.at(f - j + 1);
            let cross: f64 = (0..i).map(|l| psi[l] * psi[j - i + l]).sum();
            acc += 2.0 * wi * wj * cross;
        }
    }
    model.sigma2 * acc
}

/// Linear teaching signal `y(t) = Σ_{i=1..f} w_{f-i+1} z(t+i)`, defined for
/// every `t` whose horizon lies inside `z`.
pub fn arma_aggregate_target(z: &TimeSeries, w: &AggregationVector) -> Result<TimeSeries> {
    let f = w.f();
    if z.len() <= f {
        return Err(Error::InsufficientData(format!("series of length {} shorter than horizon {f}", z.len())));
    }
    let v = z.values();
    let y = (0..v.len() - f)
        .map(|t| (1..=f).map(|i| w.at(f - i + 1) * v[t + i]).sum())
        .collect();
    TimeSeries::new(y, z.origin())
}

// ---------------------------------------------------------------------------
// GARCH(1,1)
// ---------------------------------------------------------------------------

/// `z(t) = σ(t) ζ(t)`, `σ²(t) = α0 + α1 z(t-1)² + β σ²(t-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarchModel {
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta: f64,
    #[serde(default)]
    pub innovations: Innovations,
}

impl GarchModel {
    pub fn new(alpha0: f64, alpha1: f64, beta: f64) -> Result<Self> {
        let m = Self { alpha0, alpha1, beta, innovations: Innovations::Gaussian };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) || !(self.alpha1 >= 0.0) || !(self.beta >= 0.0) || !(self.alpha1 + self.beta < 1.0) {
            return Err(Error::InvalidModel(format!(
                "GARCH needs alpha0 > 0, alpha1, beta >= 0 and alpha1 + beta < 1 (got {}, {}, {})",
                self.alpha0, self.alpha1, self.beta
            )));
        }
        Ok(())
    }

    pub fn persistence(&self) -> f64 {
        self.alpha1 + self.beta
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.alpha0 / (1.0 - self.persistence())
    }
}

/// Simulate a GARCH(1,1) path. Returns `(z, σ²)` aligned.
pub fn garch_simulate(
    model: &GarchModel,
    length: usize,
    seed: u64,
    burn_in: Option<usize>,
) -> Result<(TimeSeries, TimeSeries)> {
    model.validate()?;
    if length == 0 {
        return Err(Error::InvalidArgument("length must be at least 1".into()));
    }
    let burn = burn_in.unwrap_or(1000);
    let total = burn + length;
    let mut rng = stream(seed, "garch/innovations");
    let mut z = Vec::with_capacity(total);
    let mut s2 = Vec::with_capacity(total);
    let mut sig2 = model.unconditional_variance();
    for t in 0..total {
        if t > 0 {
            let zp: f64 = z[t - 1];
            sig2 = model.alpha0 + model.alpha1 * zp * zp + model.beta * sig2;
        }
        s2.push(sig2);
        z.push(sig2.sqrt() * model.innovations.draw(&mut rng));
    }
    Ok((TimeSeries::new(z[burn..].to_vec(), 0)?, TimeSeries::new(s2[burn..].to_vec(), 0)?))
}

/// Conditional variance of `z(T+1) + … + z(T+f)` given `z(T)` and `σ²(T)`.
pub fn garch_aggregate_variance_forecast(model: &GarchModel, z_t: f64, sigma2_t: f64, f: usize) -> f64 {
    let s = model.persistence();
    let long_run = model.unconditional_variance();
    let next = model.alpha0 + model.alpha1 * z_t * z_t + model.beta * sigma2_t;
    let geometric = if s == 0.0 { 1.0 } else { (1.0 - s.powi(f as i32)) / (1.0 - s) };
    f as f64 * long_run + (next - long_run) * geometric
}

/// Task matrix `Q` with `z^fᵀ Q z^f = (z(t+1) + … + z(t+f))²`.
pub fn garch_quadratic_task(f: usize) -> Result<DMatrix<f64>> {
    if f == 0 {
        return Err(Error::InvalidArgument("horizon f must be at least 1".into()));
    }
    Ok(DMatrix::from_element(f, f, 1.0))
}

// ---------------------------------------------------------------------------
// ARSV
// ---------------------------------------------------------------------------

/// `z(t) = r + σ(t) ζ(t)`, `b(t) = log σ(t)² = λ + α b(t-1) + w(t)`,
/// `w ~ N(0, σ_w²)` independent of `ζ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArsvModel {
    pub r: f64,
    pub lam: f64,
    pub alpha: f64,
    pub sigma_w: f64,
    #[serde(default)]
    pub innovations: Innovations,
}

/// Simulated ARSV path: returns, volatility and log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArsvPath {
    pub z: TimeSeries,
    pub sigma: TimeSeries,
    pub b: TimeSeries,
}

impl ArsvModel {
    pub fn new(r: f64, lam: f64, alpha: f64, sigma_w: f64) -> Result<Self> {
        let m = Self { r, lam, alpha, sigma_w, innovations: Innovations::Gaussian };
        m.validate()?;
        Ok(m)
    }

    /// Parameters used in the stochastic-volatility filtering benchmark.
    pub fn benchmark() -> Self {
        Self::new(3.9e-4, -0.821, 0.9, 0.675).expect("valid benchmark parameters")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > -1.0 && self.alpha < 1.0) {
            return Err(Error::InvalidModel(format!("alpha {} outside (-1, 1)", self.alpha)));
        }
        if !(self.sigma_w > 0.0) || !self.sigma_w.is_finite() {
            return Err(Error::InvalidModel(format!("sigma_w {} must be positive", self.sigma_w)));
        }
        if !self.r.is_finite() || !self.lam.is_finite() {
            return Err(Error::InvalidModel("non-finite ARSV parameter".into()));
        }
        Ok(())
    }

    /// Stationary variance of `b`, `σ_b² = σ_w²/(1-α²)`.
    pub fn sigma_b2(&self) -> f64 {
        self.sigma_w * self.sigma_w / (1.0 - self.alpha * self.alpha)
    }

    pub fn mean_b(&self) -> f64 {
        self.lam / (1.0 - self.alpha)
    }

    /// `var z = E[σ²] = exp(λ/(1-α) + σ_b²/2)`.
    pub fn variance(&self) -> f64 {
        (self.mean_b() + self.sigma_b2() / 2.0).exp()
    }

    /// Kurtosis of `z - r`, `3 exp(σ_b²)`.
    pub fn kurtosis(&self) -> f64 {
        3.0 * self.sigma_b2().exp()
    }
}

pub fn arsv_simulate(model: &ArsvModel, length: usize, seed: u64, burn_in: Option<usize>) -> Result<ArsvPath> {
    model.validate()?;
    if length == 0 {
        return Err(Error::InvalidArgument("length must be at least 1".into()));
    }
    let burn = burn_in.unwrap_or(1000);
    let total = burn + length;
    let mut rz = stream(seed, "arsv/returns");
    let mut rw = stream(seed, "arsv/log-variance");
    let mut b = model.mean_b() + model.sigma_b2().sqrt() * model.innovations.draw(&mut rw);
    let mut z = Vec::with_capacity(length);
    let mut sigma = Vec::with_capacity(length);
    let mut bs = Vec::with_capacity(length);
    for t in 0..total {
        if t > 0 {
            b = model.lam + model.alpha * b + model.sigma_w * model.innovations.draw(&mut rw);
        }
        let s = (b / 2.0).exp();
        let zt = model.r + s * model.innovations.draw(&mut rz);
        if t >= burn {
            z.push(zt);
            sigma.push(s);
            bs.push(b);
        }
    }
    Ok(ArsvPath {
        z: TimeSeries::new(z, 0)?,
        sigma: TimeSeries::new(sigma, 0)?,
        b: TimeSeries::new(bs, 0)?,
    })
}

/// Approximate autocorrelation of `(z - r)²` at lag `h`,
/// `(e^{σ_b²} - 1)/(3 e^{σ_b²} - 1) α^h`.
pub fn arsv_squared_autocorr_approx(model: &ArsvModel, h: usize) -> f64 {
    let e = model.sigma_b2().exp();
    (e - 1.0) / (3.0 * e - 1.0) * model.alpha.powi(h as i32)
}

/// Exact autocorrelation of `(z - r)²` for lognormal volatility:
/// `(e^{σ_b² α^h} - 1)/(3 e^{σ_b²} - 1)`.
pub fn arsv_squared_autocorr_exact(model: &ArsvModel, h: usize) -> f64 {
    let s = model.sigma_b2();
    ((s * model.alpha.powi(h as i32)).exp() - 1.0) / (3.0 * s.exp() - 1.0)
}
