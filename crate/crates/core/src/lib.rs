//! Scenario forecasting with a Wasserstein GAN: train a generator on windowed
//! power series, then search its latent space for trajectories that match
//! recent history and stay inside a prediction interval around a point
//! forecast.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forecaster;
pub mod copula;
pub mod data;
pub mod gan;
pub mod metrics;
pub mod nn;

pub use error::{Error, ErrorKind, Result};
