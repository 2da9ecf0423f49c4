use std::collections::BTreeSet;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::series::{persistence_forecast, PowerSeries};
use crate::error::{Error, Result};

/// One sample: `h+1` history values ending at the forecast origin, then `k`
/// realized values and the matching point forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Index of the first history value in the source series.
    pub start: usize,
    pub start_time: NaiveDateTime,
    pub step_secs: i64,
    pub history: Vec<f64>,
    pub horizon: Vec<f64>,
    pub point_forecast: Vec<f64>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.history.len() + self.horizon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the forecast origin (last history value).
    pub fn origin(&self) -> usize {
        self.start + self.history.len() - 1
    }

    pub fn end_time(&self) -> NaiveDateTime {
        self.start_time + TimeDelta::seconds(self.step_secs * (self.len() as i64 - 1))
    }

    /// History followed by horizon.
    pub fn values(&self) -> Vec<f64> {
        let mut v = self.history.clone();
        v.extend_from_slice(&self.horizon);
        v
    }

    fn days(&self) -> impl Iterator<Item = NaiveDate> {
        let first = self.start_time.date();
        let last = self.end_time().date();
        first.iter_days().take_while(move |d| *d <= last)
    }
}

/// Builds the window starting at `start`. The point forecast comes from the
/// series' forecast column when present, else from persistence.
pub fn window_at(series: &PowerSeries, start: usize, h: usize, k: usize) -> Result<Window> {
    if k == 0 {
        return Err(Error::InvalidArgument("forecast horizon k must be at least 1".into()));
    }
    let len = h + k + 1;
    if start + len > series.len() {
        return Err(Error::Data(format!(
            "window [{start}, {}) runs past series of length {}",
            start + len,
            series.len()
        )));
    }
    let origin = start + h;
    let point_forecast = match &series.forecast {
        Some(f) => f[origin + 1..origin + 1 + k].to_vec(),
        None => persistence_forecast(&series.power, origin, k)?,
    };
    Ok(Window {
        start,
        start_time: series.timestamp(start),
        step_secs: series.step_secs,
        history: series.power[start..=origin].to_vec(),
        horizon: series.power[origin + 1..start + len].to_vec(),
        point_forecast,
    })
}

fn check_normalized(series: &PowerSeries) -> Result<()> {
    if let Some((i, v)) = series
        .power
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::Data(format!(
            "value {v} at index {i} outside [0, 1]; normalize the series first"
        )));
    }
    Ok(())
}

/// Sliding windows of length `h+k+1` at `stride`;
/// `floor((len − (h+k+1)) / stride) + 1` of them.
pub fn window(series: &PowerSeries, h: usize, k: usize, stride: usize) -> Result<Vec<Window>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("window stride must be positive".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("forecast horizon k must be at least 1".into()));
    }
    check_normalized(series)?;
    let len = h + k + 1;
    if series.len() < len {
        return Err(Error::Data(format!(
            "series of length {} too short for windows of length {len}",
            series.len()
        )));
    }
    (0..=series.len() - len)
        .step_by(stride)
        .map(|s| window_at(series, s, h, k))
        .collect()
}

/// One window per calendar day, starting at midnight.
pub fn day_aligned_windows(series: &PowerSeries, h: usize, k: usize) -> Result<Vec<Window>> {
    check_normalized(series)?;
    let per_day = series.steps_per_day().ok_or_else(|| {
        Error::Data(format!(
            "step of {}s does not divide a day",
            series.step_secs
        ))
    })?;
    let len = h + k + 1;
    let first_midnight = (0..per_day.min(series.len()))
        .find(|&i| series.timestamp(i).time() == chrono::NaiveTime::MIN)
        .ok_or_else(|| Error::Data("series contains no midnight sample".into()))?;
    (first_midnight..series.len())
        .step_by(per_day)
        .take_while(|s| s + len <= series.len())
        .map(|s| window_at(series, s, h, k))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaySplit {
    pub train: Vec<Window>,
    pub test: Vec<Window>,
    /// Windows whose span reaches into a day of the other partition.
    pub dropped: Vec<Window>,
    pub train_days: Vec<NaiveDate>,
    pub test_days: Vec<NaiveDate>,
}

/// Assigns whole calendar days to train/test by seeded shuffle. A window
/// belongs to the partition of its first day and is dropped if it spans a
/// day of the other partition.
pub fn split_by_day(windows: Vec<Window>, ratio: f64, seed: u64) -> Result<DaySplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let days: Vec<NaiveDate> = windows
        .iter()
        .map(|w| w.start_time.date())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if days.len() < 2 {
        return Err(Error::Data(format!(
            "need windows from at least 2 distinct days, got {}",
            days.len()
        )));
    }
    let mut shuffled = days.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * days.len() as f64).round() as usize).clamp(1, days.len() - 1);
    let train_days: BTreeSet<NaiveDate> = shuffled[..n_train].iter().copied().collect();
    let test_days: BTreeSet<NaiveDate> = shuffled[n_train..].iter().copied().collect();

    let mut split = DaySplit {
        train: Vec::new(),
        test: Vec::new(),
        dropped: Vec::new(),
        train_days: train_days.iter().copied().collect(),
        test_days: test_days.iter().copied().collect(),
    };
    for w in windows {
        let in_train = train_days.contains(&w.start_time.date());
        let other = if in_train { &test_days } else { &train_days };
        if w.days().any(|d| other.contains(&d)) {
            split.dropped.push(w);
        } else if in_train {
            split.train.push(w);
        } else {
            split.test.push(w);
        }
    }
    Ok(split)
}
