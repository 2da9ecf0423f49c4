//! One flat TOML document per run. Command-line flags are applied on top of
//! the file as key/value overrides before the document is deserialized, so
//! every resolved setting can be echoed into the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scenfc_core::data::SyntheticConfig;
use scenfc_core::forecaster::{SearchConfig, FORECAST_FLOOR, MAX_RESTARTS};
use scenfc_core::gan::{Architecture, EarlyStop, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Power series CSV (`timestamp,power[,forecast]`).
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    /// Trained model for `forecast`.
    pub model: Option<PathBuf>,
    /// Installed capacity used to normalize the input series.
    pub capacity: f64,

    // windowing
    pub h: usize,
    pub k: usize,
    pub stride: usize,
    pub train_ratio: f64,

    // synthetic data
    pub length: usize,
    pub rho: f64,
    pub base: f64,
    pub diurnal_amplitude: f64,
    pub period: usize,
    pub noise_std: f64,
    pub clip_to_unit: bool,
    pub step_secs: i64,
    pub start: String,

    // training
    pub arch: Architecture,
    pub hidden: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub n_discri: usize,
    /// Cap on training windows, taken evenly across the training split.
    pub max_windows: Option<usize>,
    /// Write `checkpoint.json` every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
    pub early_stop_threshold: Option<f64>,
    pub resume: Option<PathBuf>,

    // forecasting
    pub alpha: f64,
    /// Interval sweep; empty means `[alpha]`.
    pub alphas: Vec<f64>,
    /// Lead-time sweep over the model window; empty means `[k]` of the model.
    pub horizons: Vec<usize>,
    pub alpha_sub: Option<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub n_scenarios: usize,
    pub n_init: usize,
    pub n_scen: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub cap: Option<f64>,
    pub forecast_floor: f64,
    pub max_restarts: usize,
    /// Test windows to forecast, evenly spaced (0: all).
    pub instances: usize,

    // evaluation
    /// Scenario batch files (`scenarios.json`) to compare.
    pub sets: Vec<PathBuf>,
    pub k_max: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SyntheticConfig::default();
        let train = TrainConfig::default();
        let search = SearchConfig::default();
        Self {
            seed: 0,
            input: None,
            output: PathBuf::from("out"),
            model: None,
            capacity: 1.0,
            h: 23,
            k: 8,
            stride: 1,
            train_ratio: 0.8,
            length: synth.length,
            rho: synth.rho,
            base: synth.base,
            diurnal_amplitude: synth.diurnal_amplitude,
            period: synth.period,
            noise_std: synth.noise_std,
            clip_to_unit: synth.clip,
            step_secs: synth.step_secs,
            start: synth.start,
            arch: Architecture::default(),
            hidden: 64,
            iterations: train.iterations,
            learning_rate: train.learning_rate,
            clip: train.clip,
            batch_size: train.batch_size,
            n_discri: train.n_discri,
            max_windows: None,
            checkpoint_every: 0,
            early_stop_threshold: None,
            resume: None,
            alpha: search.alpha,
            alphas: Vec::new(),
            horizons: Vec::new(),
            alpha_sub: None,
            beta: search.beta,
            gamma: search.gamma,
            n_scenarios: search.n_scenarios,
            n_init: search.n_init,
            n_scen: search.n_scen,
            step_size: search.step_size,
            momentum: search.momentum,
            cap: None,
            forecast_floor: FORECAST_FLOOR,
            max_restarts: MAX_RESTARTS,
            instances: 10,
            sets: Vec::new(),
            k_max: None,
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides in order and
    /// deserializes the result. Unknown keys are usage errors.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            table.insert(key.clone(), value.clone());
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        Ok(config)
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            rho: self.rho,
            base: self.base,
            diurnal_amplitude: self.diurnal_amplitude,
            period: self.period,
            noise_std: self.noise_std,
            length: self.length,
            seed: self.seed,
            clip: self.clip_to_unit,
            step_secs: self.step_secs,
            start: self.start.clone(),
        }
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            clip: self.clip,
            batch_size: self.batch_size,
            n_discri: self.n_discri,
            iterations: self.iterations,
            seed: self.seed.wrapping_add(1),
            early_stop: self.early_stop_threshold.map(EarlyStop::new),
        }
    }

    pub fn search(&self, alpha: f64) -> SearchConfig {
        SearchConfig {
            alpha,
            alpha_sub: self.alpha_sub,
            beta: self.beta,
            gamma: self.gamma,
            n_scenarios: self.n_scenarios,
            n_init: self.n_init,
            n_scen: self.n_scen,
            step_size: self.step_size,
            momentum: self.momentum,
            cap: self.cap,
            forecast_floor: self.forecast_floor,
            max_restarts: self.max_restarts,
        }
    }

    pub fn alpha_list(&self) -> Vec<f64> {
        if self.alphas.is_empty() {
            vec![self.alpha]
        } else {
            self.alphas.clone()
        }
    }

    pub fn input_path(&self) -> CliResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Usage("no input series given (set `input` or --input)".into()))
    }
}

/// Parses `key=value`; the value is read as a TOML value when possible and
/// as a bare string otherwise, so `--set arch=dense` works unquoted.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), String> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got '{s}'"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(format!("empty key in '{s}'"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}
