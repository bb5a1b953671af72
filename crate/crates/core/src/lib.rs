//! Discrete-time reservoir computing for stationary signals.
//!
//! The crate has three layers:
//!
//! * [`series`] and [`generators`] produce and summarise scalar stationary
//!   time series (sample and Gaussian automoments, ARMA/GARCH/ARSV processes).
//! * [`tdr`] simulates a time-delay reservoir exactly and trains ridge
//!   readouts on its states; [`capacity`] linearizes the same reservoir
//!   around its stable fixed point and evaluates task capacities in closed
//!   form from input moments.
//! * [`properties`] and [`baselines`] hold falsification harnesses for the
//!   separation and fading-memory properties and a Kalman-filter baseline
//!   for stochastic-volatility filtering. [`experiment`] wires everything
//!   to a JSON-configured command line.

pub mod baselines;
pub mod capacity;
pub mod error;
pub mod experiment;
pub mod generators;
pub mod linalg;
pub mod properties;
pub mod rng;
pub mod series;
pub mod tdr;

pub use error::{Error, Result};
