//! Kalman-filter baseline for log-variance filtering in the ARSV model.
//!
//! Squared returns are log-transformed into the linear state-space form
//! `g(t) = b(t) + u(t)`, where `u` is a centred `log χ²₁` variable with
//! variance `π²/2`, and the Gaussian Kalman recursions are run on `g`. The
//! filter is the best linear estimator, not the optimal one, since `u` is
//! not Gaussian.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{ArsvModel, LOG_CHI2_MEAN};
use crate::series::TimeSeries;

/// Guard added to squared returns before taking logs.
pub const LOG_GUARD: f64 = 1e-12;

/// Variance of `log χ²₁`.
pub const LOG_CHI2_VARIANCE: f64 = PI * PI / 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    /// `b̂(t | t)`
    pub filtered: TimeSeries,
    pub filtered_var: TimeSeries,
    /// `b̂(t | t-1)`
    pub predicted: TimeSeries,
    pub predicted_var: TimeSeries,
}

/// Centred log-squared observations `log((z - r)² + guard) - E[log χ²₁]`.
pub fn log_square_observations(z: &TimeSeries, model: &ArsvModel) -> Result<TimeSeries> {
    z.map(|v| ((v - model.r).powi(2) + LOG_GUARD).ln() - LOG_CHI2_MEAN)
}

/// Kalman recursions for `b(t) = λ + α b(t-1) + w(t)`, `g(t) = b(t) + u(t)`
/// with `Var u = obs_var`, started from the stationary law of `b`.
pub fn kalman_filter(g: &TimeSeries, model: &ArsvModel, obs_var: f64) -> Result<KalmanOutput> {
    model.validate()?;
    let n = g.len();
    let (mut filt, mut filt_p, mut pred, mut pred_p) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut b_pred = model.mean_b();
    let mut p_pred = model.sigma_b2();
    let q = model.sigma_w * model.sigma_w;
    for &obs in g.values() {
        pred.push(b_pred);
        pred_p.push(p_pred);
        let gain = p_pred / (p_pred + obs_var);
        let b_filt = b_pred + gain * (obs - b_pred);
        let p_filt = (1.0 - gain) * p_pred;
        filt.push(b_filt);
        filt_p.push(p_filt);
        b_pred = model.lam + model.alpha * b_filt;
        p_pred = model.alpha * model.alpha * p_filt + q;
    }
    let origin = g.origin();
    Ok(KalmanOutput {
        filtered: TimeSeries::new(filt, origin)?,
        filtered_var: TimeSeries::new(filt_p, origin)?,
        predicted: TimeSeries::new(pred, origin)?,
        predicted_var: TimeSeries::new(pred_p, origin)?,
    })
}

/// Filter the log-variance `b(t)` of an ARSV return series.
pub fn arsv_kalman_filter(z: &TimeSeries, model: &ArsvModel) -> Result<KalmanOutput> {
    kalman_filter(&log_square_observations(z, model)?, model, LOG_CHI2_VARIANCE)
}

/// Steady-state `(predicted, filtered)` error variances, the positive root of
/// `P = α² P H / (P + H) + σ_w²`.
pub fn riccati_steady_state(model: &ArsvModel, obs_var: f64) -> (f64, f64) {
    let q = model.sigma_w * model.sigma_w;
    let h = obs_var;
    let b = h * (1.0 - model.alpha * model.alpha) - q;
    let p = (-b + (b * b + 4.0 * q * h).sqrt()) / 2.0;
    (p, p * h / (p + h))
}

/// How a log-variance estimate maps to the volatility quantity being scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolTransform {
    /// `b`, the log variance
    Identity,
    /// `exp(b/2)`, the volatility
    ExpHalf,
    /// `exp(b)`, the variance
    Exp,
    /// `b/2`, the log volatility
    LogHalf,
}

impl VolTransform {
    pub const ALL: [VolTransform; 4] = [VolTransform::ExpHalf, VolTransform::Exp, VolTransform::LogHalf, VolTransform::Identity];

    pub fn apply(self, b: f64) -> f64 {
        match self {
            VolTransform::Identity => b,
            VolTransform::ExpHalf => (b / 2.0).exp(),
            VolTransform::Exp => b.exp(),
            VolTransform::LogHalf => b / 2.0,
        }
    }

    /// Column label used in benchmark tables.
    pub fn label(self) -> &'static str {
        match self {
            VolTransform::Identity => "log_var",
            VolTransform::ExpHalf => "vol",
            VolTransform::Exp => "var",
            VolTransform::LogHalf => "log_vol",
        }
    }
}

/// NMSE of `transform(b̂)` against the already-transformed truth over their
/// shared time range.
pub fn kalman_volatility_nmse(b_hat: &TimeSeries, truth: &TimeSeries, transform: VolTransform) -> Result<f64> {
    let from = b_hat.origin().max(truth.origin());
    let to = b_hat.end().min(truth.end());
    if to < from {
        return Err(Error::InsufficientData("estimate and truth do not overlap".into()));
    }
    let est = b_hat.window(from, to)?;
    let tru = truth.window(from, to)?;
    let var = tru.variance();
    if var <= 0.0 {
        return Err(Error::ZeroVarianceTeaching);
    }
    let mse = est
        .values()
        .iter()
        .zip(tru.values())
        .map(|(&b, &y)| (transform.apply(b) - y).powi(2))
        .sum::<f64>()
        / tru.len() as f64;
    Ok(mse / var)
}
