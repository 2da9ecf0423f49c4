use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::series::{parse_timestamp, PowerSeries};
use crate::error::{Error, Result};

/// AR(1) noise around a level with a sinusoidal daily cycle:
/// `x_t = clip(base + amplitude·sin(2πt/period) + e_t, 0, 1)`,
/// `e_t = ρ·e_{t−1} + ε_t`, `ε_t ~ N(0, noise_std²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub rho: f64,
    pub base: f64,
    pub diurnal_amplitude: f64,
    /// Steps per daily cycle (288 for 5-minute data).
    pub period: usize,
    pub noise_std: f64,
    pub length: usize,
    pub seed: u64,
    pub clip: bool,
    pub step_secs: i64,
    pub start: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            rho: 0.8,
            base: 0.5,
            diurnal_amplitude: 0.2,
            period: 288,
            noise_std: 0.06,
            length: 288 * 30,
            seed: 0,
            clip: true,
            step_secs: 300,
            start: "2007-01-01T00:00:00".into(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad(format!("AR coefficient must lie in (-1, 1), got {}", self.rho));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad(format!("noise std must be >= 0, got {}", self.noise_std));
        }
        if self.length == 0 || self.period == 0 || self.step_secs <= 0 {
            return bad("length, period and step must be positive".into());
        }
        if !self.base.is_finite() || !self.diurnal_amplitude.is_finite() {
            return bad("base and amplitude must be finite".into());
        }
        if parse_timestamp(&self.start).is_none() {
            return bad(format!("unparseable start timestamp '{}'", self.start));
        }
        Ok(())
    }
}

/// Unclipped AR(1) component, started from its stationary distribution.
pub fn ar1_noise(rho: f64, noise_std: f64, length: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if noise_std == 0.0 {
        return vec![0.0; length];
    }
    let innov = Normal::new(0.0, noise_std).expect("valid std");
    let stationary = Normal::new(0.0, noise_std / (1.0 - rho * rho).sqrt()).expect("valid std");
    let mut e = stationary.sample(rng);
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        out.push(e);
        e = rho * e + innov.sample(rng);
    }
    out
}

pub fn synth_generate(config: &SyntheticConfig) -> Result<PowerSeries> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = ar1_noise(config.rho, config.noise_std, config.length, &mut rng);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut values = Vec::with_capacity(config.length);
    for (t, e) in noise.iter().enumerate() {
        let phase = two_pi * t as f64 / config.period as f64;
        let x = config.base + config.diurnal_amplitude * phase.sin() + e;
        let x = if config.clip { x.clamp(0.0, 1.0) } else { x };
        if !(x >= 0.0) {
            return Err(Error::Data(format!(
                "unclipped synthetic value {x} at step {t} is negative; enable clipping or raise the base level"
            )));
        }
        values.push(x);
    }
    let start = parse_timestamp(&config.start).expect("validated");
    let capacity = if config.clip { 1.0 } else { values.iter().fold(1.0, |m: f64, v| m.max(*v)) };
    PowerSeries::new(start, config.step_secs, values, None, capacity)
}
