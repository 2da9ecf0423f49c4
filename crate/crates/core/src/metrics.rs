//! Scenario-quality metrics: autocorrelation over look-ahead lags, Pearson
//! correlation between lead times, and CRPS of the empirical step CDF.
//!
//! Covariances use the biased (divide-by-n) estimator throughout.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrCurve {
    /// `values[k]` is R(k) for `k = 0..=k_max`.
    pub values: Vec<f64>,
}

impl AutocorrCurve {
    pub fn k_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lag", "r"])?;
        for (k, r) in self.values.iter().enumerate() {
            out.write_record([k.to_string(), r.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("autocorrelation csv", e))?;
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn lagged_sum(dev: &[f64], k: usize) -> f64 {
    dev.iter().zip(&dev[k..]).map(|(a, b)| a * b).sum()
}

/// `R(k) = E[(s_t − μ)(s_{t+k} − μ)] / σ²` for `k = 0..=k_max`.
pub fn autocorrelation(series: &[f64], k_max: usize) -> Result<AutocorrCurve> {
    if series.len() <= k_max {
        return Err(Error::InvalidArgument(format!(
            "series of length {} too short for lag {k_max}",
            series.len()
        )));
    }
    let mu = mean(series);
    let dev: Vec<f64> = series.iter().map(|s| s - mu).collect();
    let c0 = lagged_sum(&dev, 0);
    if series.iter().all(|&s| s == series[0]) || !(c0 > 0.0) {
        return Err(Error::Degenerate("autocorrelation of a constant series".into()));
    }
    let values = (0..=k_max)
        .map(|k| if k == 0 { 1.0 } else { lagged_sum(&dev, k) / c0 })
        .collect();
    Ok(AutocorrCurve { values })
}

/// Per-series curves averaged lag by lag. Constant series are skipped;
/// errors if every series is constant.
pub fn mean_autocorrelation<S: AsRef<[f64]>>(set: &[S], k_max: usize) -> Result<AutocorrCurve> {
    let mut acc = vec![0.0; k_max + 1];
    let mut used = 0usize;
    for s in set {
        match autocorrelation(s.as_ref(), k_max) {
            Ok(c) => {
                for (a, v) in acc.iter_mut().zip(&c.values) {
                    *a += v;
                }
                used += 1;
            }
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::Degenerate("every series in the set is constant".into()));
    }
    acc.iter_mut().for_each(|a| *a /= used as f64);
    acc[0] = 1.0;
    Ok(AutocorrCurve { values: acc })
}

/// One curve from pooled statistics: a common mean and variance over all
/// series, lag products summed within each series.
pub fn pooled_autocorrelation<S: AsRef<[f64]>>(set: &[S], k_max: usize) -> Result<AutocorrCurve> {
    let total: usize = set.iter().map(|s| s.as_ref().len()).sum();
    if set.iter().any(|s| s.as_ref().len() <= k_max) || total == 0 {
        return Err(Error::InvalidArgument(format!(
            "every series must be longer than lag {k_max}"
        )));
    }
    let mu = set.iter().flat_map(|s| s.as_ref().iter()).sum::<f64>() / total as f64;
    let devs: Vec<Vec<f64>> = set
        .iter()
        .map(|s| s.as_ref().iter().map(|v| v - mu).collect())
        .collect();
    let c0: f64 = devs.iter().map(|d| lagged_sum(d, 0)).sum();
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("pooled series has zero variance".into()));
    }
    let values = (0..=k_max)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                devs.iter().map(|d| lagged_sum(d, k)).sum::<f64>() / c0
            }
        })
        .collect();
    Ok(AutocorrCurve { values })
}

/// Symmetric `K × K` matrix of Pearson coefficients between lead times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub size: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.size {
            for j in 0..self.size {
                if i != j {
                    m = m.max(self.get(i, j).abs());
                }
            }
        }
        m
    }

    /// Flat `(i, j, rho)` table for heatmaps.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "rho"])?;
        for i in 0..self.size {
            for j in 0..self.size {
                out.write_record([i.to_string(), j.to_string(), self.get(i, j).to_string()])?;
            }
        }
        out.flush().map_err(|e| Error::io("correlation csv", e))?;
        Ok(())
    }
}

/// `ρ_ij = Cov(S_i, S_j) / (σ_i σ_j)` over a set of equally long vectors.
pub fn pearson_matrix<S: AsRef<[f64]>>(set: &[S]) -> Result<CorrelationMatrix> {
    if set.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 vectors, got {}",
            set.len()
        )));
    }
    let k = set[0].as_ref().len();
    if k == 0 || set.iter().any(|s| s.as_ref().len() != k) {
        return Err(Error::InvalidArgument("vectors must share a positive length".into()));
    }
    let n = set.len() as f64;
    let means: Vec<f64> = (0..k)
        .map(|i| set.iter().map(|s| s.as_ref()[i]).sum::<f64>() / n)
        .collect();
    let mut cov = vec![0.0; k * k];
    for s in set {
        let s = s.as_ref();
        for i in 0..k {
            let di = s[i] - means[i];
            for j in i..k {
                cov[i * k + j] += di * (s[j] - means[j]);
            }
        }
    }
    let sd: Vec<f64> = (0..k).map(|i| (cov[i * k + i] / n).sqrt()).collect();
    let constant = |i: usize| set.iter().all(|s| s.as_ref()[i] == set[0].as_ref()[i]);
    if let Some(col) = (0..k).find(|&i| constant(i) || !(sd[i] > 0.0)) {
        return Err(Error::Degenerate(format!("lead time {col} has zero variance")));
    }
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        values[i * k + i] = 1.0;
        for j in i + 1..k {
            let r = (cov[i * k + j] / n / (sd[i] * sd[j])).clamp(-1.0, 1.0);
            values[i * k + j] = r;
            values[j * k + i] = r;
        }
    }
    Ok(CorrelationMatrix { size: k, values })
}

/// Exact `∫_lo^hi (F̂(p) − 1{p ≥ y})² dp`, where F̂ is the empirical step
/// CDF of `values`. Only the restriction to `[lo, hi]` matters, so values
/// outside the domain act as if they sat on its edge.
pub fn crps_on(values: &[f64], realization: f64, lo: f64, hi: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("CRPS needs at least one scenario".into()));
    }
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty domain [{lo}, {hi}]")));
    }
    if !realization.is_finite() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("CRPS input".into()));
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| v.clamp(lo, hi)).collect();
    sorted.sort_by(f64::total_cmp);
    let y = realization.clamp(lo, hi);
    let n = sorted.len() as f64;

    let mut points = Vec::with_capacity(sorted.len() + 3);
    points.push(lo);
    points.extend_from_slice(&sorted);
    points.push(y);
    points.push(hi);
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut total = 0.0;
    let mut below = 0usize;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        while below < sorted.len() && sorted[below] <= a {
            below += 1;
        }
        let f = below as f64 / n;
        let ind = if a >= y { 1.0 } else { 0.0 };
        total += (f - ind) * (f - ind) * (b - a);
    }
    Ok(total)
}

/// CRPS on the normalized power domain [0, 1].
pub fn crps(values: &[f64], realization: f64) -> Result<f64> {
    crps_on(values, realization, 0.0, 1.0)
}

/// Mean CRPS per lead time across forecast instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrpsCurve {
    pub values: Vec<f64>,
    pub instances: usize,
}

impl CrpsCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lead", "crps"])?;
        for (i, v) in self.values.iter().enumerate() {
            out.write_record([(i + 1).to_string(), v.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("crps csv", e))?;
        Ok(())
    }
}

/// `scenario_sets[i]` holds the scenarios (each of length k) for instance
/// `i`, `realizations[i]` the realized length-k trajectory.
pub fn crps_curve<S: AsRef<[f64]>, R: AsRef<[f64]>>(
    scenario_sets: &[Vec<S>],
    realizations: &[R],
) -> Result<CrpsCurve> {
    if scenario_sets.len() != realizations.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scenario sets but {} realizations",
            scenario_sets.len(),
            realizations.len()
        )));
    }
    let Some(first) = realizations.first() else {
        return Err(Error::InvalidArgument("no forecast instances".into()));
    };
    let k = first.as_ref().len();
    let mut acc = vec![0.0; k];
    let mut lead_values = Vec::new();
    for (i, (set, real)) in scenario_sets.iter().zip(realizations).enumerate() {
        let real = real.as_ref();
        if real.len() != k || set.iter().any(|s| s.as_ref().len() != k) {
            return Err(Error::InvalidArgument(format!(
                "instance {i} does not share horizon length {k}"
            )));
        }
        for lead in 0..k {
            lead_values.clear();
            lead_values.extend(set.iter().map(|s| s.as_ref()[lead]));
            acc[lead] += crps(&lead_values, real[lead])?;
        }
    }
    let n = scenario_sets.len() as f64;
    Ok(CrpsCurve {
        values: acc.into_iter().map(|a| a / n).collect(),
        instances: scenario_sets.len(),
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("KS test needs non-empty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Large-sample critical value of the two-sample KS statistic at level
/// `alpha`: `sqrt(-ln(alpha/2)/2) · sqrt((n+m)/(n·m))`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
