//! Shared plumbing: dataset preparation, scenario batch files and output
//! bookkeeping for manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scenfc_core::data::{load_csv, normalize, split_by_day, window, window_at, PowerSeries, Window};
use scenfc_core::data::TIMESTAMP_FORMAT;
use scenfc_core::forecaster::{ForecastProblem, ScenarioSet, SearchConfig};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Normalized series with its train/test windows for geometry `(h, k)`.
pub struct Dataset {
    pub series: PowerSeries,
    pub train: Vec<Window>,
    pub test: Vec<Window>,
}

pub fn load_dataset(config: &RunConfig, h: usize, k: usize) -> CliResult<Dataset> {
    let raw = load_csv(config.input_path()?, config.capacity)?;
    let series = normalize(&raw)?;
    let windows = window(&series, h, k, config.stride)?;
    let split = split_by_day(windows, config.train_ratio, config.seed)?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(CliError::Data(format!(
            "day split left {} train and {} test windows",
            split.train.len(),
            split.test.len()
        )));
    }
    Ok(Dataset {
        series,
        train: split.train,
        test: split.test,
    })
}

/// `n` indices spread evenly over `0..len` (all when `n == 0` or `n >= len`).
pub fn evenly_spaced(len: usize, n: usize) -> Vec<usize> {
    if n == 0 || n >= len {
        return (0..len).collect();
    }
    (0..n).map(|i| i * len / n).collect()
}

/// One forecast instance re-split at a (possibly different) horizon.
pub struct Instance {
    pub window: Window,
    pub problem: ForecastProblem,
}

pub fn instances(
    data: &Dataset,
    window_len: usize,
    k: usize,
    search: &SearchConfig,
    count: usize,
) -> CliResult<Vec<Instance>> {
    if k == 0 || k >= window_len {
        return Err(CliError::Usage(format!(
            "horizon {k} must lie in 1..{window_len} for windows of length {window_len}"
        )));
    }
    let h = window_len - k - 1;
    let mut test = data.test.clone();
    test.sort_by_key(|w| w.start);
    evenly_spaced(test.len(), count)
        .into_iter()
        .map(|i| {
            let w = window_at(&data.series, test[i].start, h, k)?;
            let problem = ForecastProblem::new(w.history.clone(), w.point_forecast.clone(), search.clone())?;
            Ok(Instance { window: w, problem })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchInstance {
    /// Index of the first history value in the source series.
    pub start: usize,
    pub start_time: String,
    pub realization: Vec<f64>,
    pub set: ScenarioSet,
}

/// All instances of one (method, horizon, α) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBatch {
    pub method: String,
    pub h: usize,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub model_id: Option<String>,
    pub instances: Vec<BatchInstance>,
}

impl ScenarioBatch {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn label(&self) -> String {
        format!("{}_k{}_a{}", self.method, self.k, self.alpha)
    }
}

pub fn batch_instance(w: &Window, set: ScenarioSet) -> BatchInstance {
    BatchInstance {
        start: w.start,
        start_time: w.start_time.format(TIMESTAMP_FORMAT).to_string(),
        realization: w.horizon.clone(),
        set,
    }
}

/// Sub-directory for one horizon/α combination.
pub fn combo_dir(k: usize, alpha: f64) -> PathBuf {
    PathBuf::from(format!("k{k}_a{alpha}"))
}

/// Per-instance seed derived from the run seed.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
}

/// Files written by a run, listed with their digests in the manifest.
pub struct Outputs {
    root: PathBuf,
    entries: Vec<OutputEntry>,
}

impl Outputs {
    pub fn new(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> CliResult<PathBuf> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        let rel_str = rel.to_string_lossy().replace('\\', "/");
        self.entries.retain(|e| e.path != rel_str);
        self.entries.push(OutputEntry {
            path: rel_str,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Renders into memory with a CSV-writing closure, then stores the bytes.
    pub fn write_with<F>(&mut self, rel: impl AsRef<Path>, f: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> scenfc_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    /// `<subcommand>.manifest.json`: resolved config plus output digests.
    pub fn finish(mut self, subcommand: &str, config: &RunConfig, extra: serde_json::Value) -> CliResult<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'a str,
            version: &'a str,
            subcommand: &'a str,
            config: &'a RunConfig,
            summary: serde_json::Value,
            outputs: Vec<OutputEntry>,
        }
        let entries = std::mem::take(&mut self.entries);
        let manifest = Manifest {
            tool: "scenfc",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config,
            summary: extra,
            outputs: entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join(format!("{subcommand}.manifest.json"));
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evenly_spaced_covers_range() {
        assert_eq!(evenly_spaced(10, 3), vec![0, 3, 6]);
        assert_eq!(evenly_spaced(3, 0), vec![0, 1, 2]);
        assert_eq!(evenly_spaced(3, 5), vec![0, 1, 2]);
    }
}
