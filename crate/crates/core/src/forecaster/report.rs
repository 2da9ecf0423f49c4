use serde::{Deserialize, Serialize};

use super::search::ScenarioSet;
use crate::error::Result;

/// Per-scenario distances to the interval bounds and to the observed history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMargins {
    /// `min_i (s_i − L_i)`.
    pub lower: f64,
    /// `min_i (U_i − s_i)`.
    pub upper: f64,
    /// `‖P_hist(G(z*)) − p_hist‖₂`.
    pub history_mismatch: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub scenarios: usize,
    pub feasible: usize,
    /// `None` for an empty set.
    pub feasible_fraction: Option<f64>,
    pub restarts: usize,
    pub skipped_steps: usize,
    pub floored_leads: Vec<usize>,
    pub margins: Vec<ScenarioMargins>,
    pub mismatch_mean: Option<f64>,
    pub mismatch_max: Option<f64>,
}

pub fn feasibility_report(set: &ScenarioSet) -> Result<FeasibilityReport> {
    let bounds = set.problem.bounds()?;
    let margins: Vec<ScenarioMargins> = set
        .scenarios
        .iter()
        .map(|s| {
            let lower = s
                .values
                .iter()
                .zip(&bounds.lower)
                .map(|(v, l)| v - l)
                .fold(f64::INFINITY, f64::min);
            let upper = s
                .values
                .iter()
                .zip(&bounds.upper)
                .map(|(v, u)| u - v)
                .fold(f64::INFINITY, f64::min);
            let history_mismatch = s
                .history
                .iter()
                .zip(&set.problem.p_hist)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            ScenarioMargins {
                lower,
                upper,
                history_mismatch,
                feasible: s.feasible,
            }
        })
        .collect();
    let n = margins.len();
    let feasible = margins.iter().filter(|m| m.feasible).count();
    let (mismatch_mean, mismatch_max) = if n == 0 {
        (None, None)
    } else {
        let sum: f64 = margins.iter().map(|m| m.history_mismatch).sum();
        let max = margins.iter().map(|m| m.history_mismatch).fold(0.0, f64::max);
        (Some(sum / n as f64), Some(max))
    };
    Ok(FeasibilityReport {
        scenarios: n,
        feasible,
        feasible_fraction: (n > 0).then(|| feasible as f64 / n as f64),
        restarts: set.scenarios.iter().map(|s| s.restarts).sum(),
        skipped_steps: set.scenarios.iter().map(|s| s.skipped_steps).sum(),
        floored_leads: set.problem.floored_leads.clone(),
        margins,
        mismatch_mean,
        mismatch_max,
    })
}
