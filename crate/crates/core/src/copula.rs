//! Empirical Gaussian copula over the lead times of a forecast horizon.
//!
//! Each lead keeps its sorted training values as an empirical marginal. The
//! dependence between leads is the correlation of normal scores
//! `Φ⁻¹(rank / (n + 1))`. Sampling correlates standard normal draws through a
//! Cholesky factor, maps them back to uniforms with `Φ` and inverts each
//! marginal by linear interpolation between order statistics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::forecaster::{ForecastProblem, Scenario, ScenarioSet};

/// Jitter added to the diagonal per failed factorization.
pub const JITTER: f64 = 1e-8;
const MAX_JITTER_ROUNDS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    /// Sorted training values, one list per lead.
    pub marginals: Vec<Vec<f64>>,
    /// Row-major k×k correlation of normal scores, before regularization.
    pub correlation: Vec<f64>,
    /// Total amount added to the diagonal before factorization succeeded.
    pub jitter: f64,
    /// Row-major lower-triangular factor of the regularized correlation.
    pub cholesky: Vec<f64>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Average ranks (1-based); tied values share the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// `Φ⁻¹(rank / (n + 1))` for every value in one column.
pub fn normal_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let normal = std_normal();
    average_ranks(values)
        .into_iter()
        .map(|r| normal.inverse_cdf(r / (n + 1.0)))
        .collect()
}

fn correlation(columns: &[Vec<f64>]) -> Vec<f64> {
    let k = columns.len();
    let n = columns[0].len() as f64;
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        out[i * k + i] = 1.0;
        for j in 0..i {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            out[i * k + j] = r;
            out[j * k + i] = r;
        }
    }
    out
}

/// Factorizes `Σ + jI`, growing `j` until the factorization succeeds.
fn regularized_cholesky(sigma: &[f64], k: usize) -> Result<(f64, Vec<f64>)> {
    let base = DMatrix::from_row_slice(k, k, sigma);
    let mut jitter = 0.0;
    for round in 0..MAX_JITTER_ROUNDS {
        let m = &base + DMatrix::identity(k, k) * jitter;
        if let Some(ch) = m.cholesky() {
            let l = ch.l();
            let flat = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]);
            return Ok((jitter, flat.collect()));
        }
        jitter = JITTER * 2f64.powi(round as i32);
    }
    Err(Error::Numerical(
        "correlation matrix could not be regularized to positive definite".into(),
    ))
}

impl CopulaModel {
    /// Builds a model from explicit marginals and a correlation matrix.
    pub fn new(marginals: Vec<Vec<f64>>, correlation: Vec<f64>) -> Result<Self> {
        let k = marginals.len();
        if k == 0 {
            return Err(Error::InvalidArgument("copula needs at least one lead".into()));
        }
        if correlation.len() != k * k {
            return Err(Error::shape(&[k, k], &[correlation.len()]));
        }
        let mut marginals = marginals;
        for (j, m) in marginals.iter_mut().enumerate() {
            if m.is_empty() {
                return Err(Error::Data(format!("lead {} has an empty marginal", j + 1)));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("marginal of lead {}", j + 1)));
            }
            m.sort_by(f64::total_cmp);
        }
        let (jitter, cholesky) = regularized_cholesky(&correlation, k)?;
        Ok(Self {
            marginals,
            correlation,
            jitter,
            cholesky,
        })
    }

    pub fn k(&self) -> usize {
        self.marginals.len()
    }

    pub fn regularized(&self) -> Vec<f64> {
        let k = self.k();
        let mut s = self.correlation.clone();
        for i in 0..k {
            s[i * k + i] += self.jitter;
        }
        s
    }

    /// Inverse empirical CDF at `u`, reading order statistic `i` at
    /// `u = i / (n + 1)` and interpolating linearly between neighbours.
    pub fn quantile(&self, lead: usize, u: f64) -> f64 {
        let sorted = &self.marginals[lead];
        let n = sorted.len();
        let pos = (u * (n + 1) as f64).clamp(1.0, n as f64) - 1.0;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }

    /// One scenario plus the correlated normal draw behind it.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let k = self.k();
        let e: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let l = DMatrix::from_row_slice(k, k, &self.cholesky);
        let x = l * DVector::from_vec(e);
        let normal = std_normal();
        let values = (0..k).map(|j| self.quantile(j, normal.cdf(x[j]))).collect();
        (values, x.iter().copied().collect())
    }
}

/// Fits the copula to horizon segments, one row per training window.
pub fn fit_copula(windows: &[Vec<f64>], k: usize) -> Result<CopulaModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("horizon k must be at least 1".into()));
    }
    if windows.len() < k + 1 {
        return Err(Error::Data(format!(
            "copula fit needs at least {} windows, got {}",
            k + 1,
            windows.len()
        )));
    }
    if let Some(w) = windows.iter().find(|w| w.len() != k) {
        return Err(Error::shape(&[k], &[w.len()]));
    }
    let columns: Vec<Vec<f64>> = (0..k).map(|j| windows.iter().map(|w| w[j]).collect()).collect();
    for (j, c) in columns.iter().enumerate() {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("training values of lead {}", j + 1)));
        }
        if c.iter().all(|v| *v == c[0]) {
            return Err(Error::Degenerate(format!(
                "lead {} is constant across training windows",
                j + 1
            )));
        }
    }
    let scores: Vec<Vec<f64>> = columns.iter().map(|c| normal_scores(c)).collect();
    CopulaModel::new(columns, correlation(&scores))
}

pub fn sample_copula<R: Rng + ?Sized>(model: &CopulaModel, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| model.draw(rng).0).collect()
}

/// Unconditional copula scenarios packaged like the GAN forecaster's output,
/// with feasibility judged against the problem's interval. History is not
/// used, so each scenario's `history` is empty.
pub fn copula_scenarios(model: &CopulaModel, problem: &ForecastProblem, seed: u64) -> Result<ScenarioSet> {
    if problem.k() != model.k() {
        return Err(Error::InvalidArgument(format!(
            "problem horizon {} differs from the copula's {}",
            problem.k(),
            model.k()
        )));
    }
    let bounds = problem.bounds()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios = (0..problem.config.n_scenarios)
        .map(|_| {
            let (values, latent) = model.draw(&mut rng);
            Scenario {
                feasible: bounds.strictly_contains(&values),
                values,
                history: Vec::new(),
                latent,
                objective: None,
                restarts: 0,
                skipped_steps: 0,
                max_abs_z: 0.0,
            }
        })
        .collect();
    Ok(ScenarioSet {
        method: "copula".into(),
        model_id: None,
        seed,
        problem: problem.clone(),
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_share_average_rank() {
        assert_eq!(average_ranks(&[0.3, 0.1, 0.3, 0.2]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn quantile_hits_order_statistics_and_interpolates() {
        let m = CopulaModel::new(vec![vec![0.4, 0.1, 0.2]], vec![1.0]).unwrap();
        assert_eq!(m.quantile(0, 0.25), 0.1);
        assert_eq!(m.quantile(0, 0.5), 0.2);
        assert_eq!(m.quantile(0, 0.75), 0.4);
        assert!((m.quantile(0, 0.375) - 0.15).abs() < 1e-15);
        assert_eq!(m.quantile(0, 0.01), 0.1);
        assert_eq!(m.quantile(0, 0.99), 0.4);
    }

    #[test]
    fn point_mass_marginal_always_returns_it() {
        let m = CopulaModel::new(vec![vec![0.5], vec![0.5]], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in sample_copula(&m, 100, &mut rng) {
            assert_eq!(s, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_copula(&[vec![0.1, 0.2], vec![0.3, 0.4]], 2).is_err());
        let constant: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.5]).collect();
        assert!(matches!(fit_copula(&constant, 2), Err(Error::Degenerate(_))));
    }
}
