use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point forecasts below this (normalized units) are raised to it before
/// interval bounds are computed, so the log barriers keep `L < U`.
pub const FORECAST_FLOOR: f64 = 1e-3;
pub const MAX_RESTARTS: usize = 5;

/// First `h+1` elements of a length `h+k+1` vector.
pub fn project_hist(v: &[f64], h: usize, k: usize) -> Result<Vec<f64>> {
    check_split(v, h, k)?;
    Ok(v[..=h].to_vec())
}

/// Last `k` elements of a length `h+k+1` vector.
pub fn project_pred(v: &[f64], h: usize, k: usize) -> Result<Vec<f64>> {
    check_split(v, h, k)?;
    Ok(v[h + 1..].to_vec())
}

fn check_split(v: &[f64], h: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("forecast horizon k must be at least 1".into()));
    }
    if v.len() != h + k + 1 {
        return Err(Error::shape(&[h + k + 1], &[v.len()]));
    }
    Ok(())
}

/// Prediction interval `[p̂/α, α·p̂]` around a point forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl IntervalBounds {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Strict containment `L < s < U` elementwise.
    pub fn strictly_contains(&self, s: &[f64]) -> bool {
        s.len() == self.len()
            && s
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l < v && v < u)
    }

    pub fn contains_interval(&self, other: &IntervalBounds) -> bool {
        self.len() == other.len()
            && (0..self.len())
                .all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }
}

/// `L = p̂/α`, `U = α·p̂`, with `U` optionally capped.
pub fn interval_bounds(p_pred: &[f64], alpha: f64, cap: Option<f64>) -> Result<IntervalBounds> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "interval parameter alpha must exceed 1, got {alpha}"
        )));
    }
    if p_pred.is_empty() {
        return Err(Error::InvalidArgument("empty point forecast".into()));
    }
    if let Some((i, p)) = p_pred.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "point forecast {p} at lead {i} is not positive; apply the forecast floor ({FORECAST_FLOOR}) first"
        )));
    }
    let lower: Vec<f64> = p_pred.iter().map(|p| p / alpha).collect();
    let upper: Vec<f64> = p_pred
        .iter()
        .map(|p| match cap {
            Some(c) => (alpha * p).min(c),
            None => alpha * p,
        })
        .collect();
    if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
        return Err(Error::InvalidArgument(format!(
            "empty interval at lead {i}: [{}, {}]",
            lower[i], upper[i]
        )));
    }
    Ok(IntervalBounds { lower, upper })
}

/// Search settings shared by every problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub alpha: f64,
    /// Interval used to sample initialization targets; defaults to
    /// `1 + 0.8·(α − 1)` when unset.
    pub alpha_sub: Option<f64>,
    /// Log-barrier weight.
    pub beta: f64,
    /// Realism (critic) weight.
    pub gamma: f64,
    pub n_scenarios: usize,
    pub n_init: usize,
    pub n_scen: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub cap: Option<f64>,
    pub forecast_floor: f64,
    pub max_restarts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            alpha_sub: None,
            beta: 0.01,
            gamma: 0.1,
            n_scenarios: 20,
            n_init: 200,
            n_scen: 500,
            step_size: 0.05,
            momentum: 0.9,
            cap: None,
            forecast_floor: FORECAST_FLOOR,
            max_restarts: MAX_RESTARTS,
        }
    }
}

impl SearchConfig {
    pub fn alpha_sub(&self) -> f64 {
        self.alpha_sub.unwrap_or(1.0 + 0.8 * (self.alpha - 1.0))
    }
}

/// One conditional forecast instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastProblem {
    pub p_hist: Vec<f64>,
    pub p_pred: Vec<f64>,
    pub config: SearchConfig,
    /// Leads whose point forecast was raised to the floor.
    pub floored_leads: Vec<usize>,
}

impl ForecastProblem {
    /// Applies the forecast floor and validates the settings.
    pub fn new(p_hist: Vec<f64>, p_pred: Vec<f64>, config: SearchConfig) -> Result<Self> {
        let floor = config.forecast_floor;
        if !(floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "forecast floor must be positive, got {floor}"
            )));
        }
        let mut floored_leads = Vec::new();
        let p_pred = p_pred
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                if p < floor {
                    floored_leads.push(i);
                    floor
                } else {
                    p
                }
            })
            .collect();
        let problem = Self {
            p_hist,
            p_pred,
            config,
            floored_leads,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn h(&self) -> usize {
        self.p_hist.len() - 1
    }

    pub fn k(&self) -> usize {
        self.p_pred.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.p_hist.is_empty() || self.p_pred.is_empty() {
            return bad("history and point forecast must be non-empty".into());
        }
        if self.p_hist.iter().chain(&self.p_pred).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forecast problem".into()));
        }
        if !(c.alpha > 1.0) {
            return bad(format!("alpha must exceed 1, got {}", c.alpha));
        }
        let sub = c.alpha_sub();
        if !(sub > 1.0 && sub < c.alpha) {
            return bad(format!("alpha_sub must lie in (1, alpha), got {sub}"));
        }
        if !(c.beta >= 0.0) || !(c.gamma >= 0.0) {
            return bad("beta and gamma must be non-negative".into());
        }
        if !(c.step_size > 0.0) || !(0.0..1.0).contains(&c.momentum) {
            return bad("step size must be positive and momentum in [0, 1)".into());
        }
        self.bounds()?;
        self.init_bounds()?;
        Ok(())
    }

    /// Interval for the main objective (α).
    pub fn bounds(&self) -> Result<IntervalBounds> {
        interval_bounds(&self.p_pred, self.config.alpha, self.config.cap)
    }

    /// Interval for initialization targets (α_sub).
    pub fn init_bounds(&self) -> Result<IntervalBounds> {
        interval_bounds(&self.p_pred, self.config.alpha_sub(), self.config.cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projections_split_the_window() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(project_hist(&v, 1, 3).unwrap(), vec![1.0, 2.0]);
        assert_eq!(project_pred(&v, 1, 3).unwrap(), vec![3.0, 4.0, 5.0]);
        assert_eq!(project_pred(&v[..4], 0, 3).unwrap(), vec![2.0, 3.0, 4.0]);
        assert!(project_hist(&v, 4, 0).is_err());
        assert!(project_pred(&v, 1, 2).is_err());
    }

    #[test]
    fn bounds_by_substitution() {
        let b = interval_bounds(&[0.5, 0.8], 2.0, None).unwrap();
        assert_eq!(b.lower, vec![0.25, 0.4]);
        assert_eq!(b.upper, vec![1.0, 1.6]);
        let capped = interval_bounds(&[0.5, 0.8], 2.0, Some(1.0)).unwrap();
        assert_eq!(capped.upper, vec![1.0, 1.0]);
    }

    #[test]
    fn bounds_collapse_as_alpha_approaches_one() {
        let b = interval_bounds(&[0.3, 0.6], 1.0 + 1e-12, None).unwrap();
        assert!((b.lower[0] - 0.3).abs() < 1e-11 && (b.upper[1] - 0.6).abs() < 1e-11);
    }

    #[test]
    fn bounds_errors() {
        assert!(interval_bounds(&[0.5], 1.0, None).is_err());
        let err = interval_bounds(&[0.5, 0.0], 2.0, None).unwrap_err().to_string();
        assert!(err.contains("floor"), "{err}");
    }

    #[test]
    fn problem_applies_forecast_floor() {
        let p = ForecastProblem::new(vec![0.0, 0.0], vec![0.0, 0.4], SearchConfig::default()).unwrap();
        assert_eq!(p.p_pred, vec![FORECAST_FLOOR, 0.4]);
        assert_eq!(p.floored_leads, vec![0]);
        let b = p.bounds().unwrap();
        assert!(b.lower[0] < b.upper[0]);
    }

    #[test]
    fn problem_defaults_alpha_sub() {
        let c = SearchConfig {
            alpha: 3.0,
            ..Default::default()
        };
        assert!((c.alpha_sub() - 2.6).abs() < 1e-15);
        let bad = SearchConfig {
            alpha: 2.0,
            alpha_sub: Some(2.5),
            ..Default::default()
        };
        assert!(ForecastProblem::new(vec![0.5], vec![0.5], bad).is_err());
    }

    proptest! {
        #[test]
        fn partition_identity(v in prop::collection::vec(-5.0f64..5.0, 3..40), split in 0usize..100) {
            let h = split % (v.len() - 1);
            let k = v.len() - h - 1;
            let mut joined = project_hist(&v, h, k).unwrap();
            joined.extend(project_pred(&v, h, k).unwrap());
            prop_assert_eq!(joined, v);
        }

        #[test]
        fn intervals_nest(p in prop::collection::vec(1e-3f64..1.0, 1..20), a1 in 1.001f64..4.0, d in 0.0f64..3.0) {
            let a2 = a1 + d;
            let small = interval_bounds(&p, a1, None).unwrap();
            let large = interval_bounds(&p, a2, None).unwrap();
            prop_assert!(large.contains_interval(&small));
        }
    }
}
