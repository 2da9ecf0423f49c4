use std::fs::File;
use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
const ACCEPTED_FORMATS: [&str; 4] = [
    TIMESTAMP_FORMAT,
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ACCEPTED_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Uniformly spaced generation measurements with an optional paired point
/// forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    pub start: NaiveDateTime,
    pub step_secs: i64,
    pub power: Vec<f64>,
    pub forecast: Option<Vec<f64>>,
    /// Nominal capacity in the units of `power`; 1.0 once normalized.
    pub capacity: f64,
}

impl PowerSeries {
    pub fn new(
        start: NaiveDateTime,
        step_secs: i64,
        power: Vec<f64>,
        forecast: Option<Vec<f64>>,
        capacity: f64,
    ) -> Result<Self> {
        let s = Self {
            start,
            step_secs,
            power,
            forecast,
            capacity,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.power.is_empty() {
            return Err(Error::Data("series is empty".into()));
        }
        if self.step_secs <= 0 {
            return Err(Error::Data(format!(
                "time step must be positive, got {}s",
                self.step_secs
            )));
        }
        if !(self.capacity > 0.0) || !self.capacity.is_finite() {
            return Err(Error::Data(format!(
                "capacity must be positive, got {}",
                self.capacity
            )));
        }
        check_values(&self.power, "power")?;
        if let Some(f) = &self.forecast {
            if f.len() != self.power.len() {
                return Err(Error::Data(format!(
                    "forecast column has {} values, power has {}",
                    f.len(),
                    self.power.len()
                )));
            }
            check_values(f, "forecast")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn step(&self) -> TimeDelta {
        TimeDelta::seconds(self.step_secs)
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + TimeDelta::seconds(self.step_secs * i as i64)
    }

    /// Number of steps per calendar day, if the step divides a day evenly.
    pub fn steps_per_day(&self) -> Option<usize> {
        (86_400 % self.step_secs == 0).then(|| (86_400 / self.step_secs) as usize)
    }
}

fn check_values(values: &[f64], what: &str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Data(format!("{what} value at index {i} is not finite")));
        }
        if *v < 0.0 {
            return Err(Error::Data(format!("{what} value at index {i} is negative ({v})")));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Row {
    timestamp: String,
    power: f64,
    #[serde(default)]
    forecast: Option<f64>,
}

/// Reads `timestamp,power[,forecast]` CSV. Spacing must be uniform; row
/// numbers in errors count the header as line 1.
pub fn load_csv(path: impl AsRef<Path>, capacity: f64) -> Result<PowerSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, capacity)
}

pub fn read_csv<R: std::io::Read>(reader: R, capacity: f64) -> Result<PowerSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in ["timestamp", "power"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Data(format!("missing required column '{col}'")));
        }
    }
    let has_forecast = headers.iter().any(|h| h == "forecast");
    let mut times = Vec::new();
    let mut power = Vec::new();
    let mut forecast = Vec::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        let t = parse_timestamp(&row.timestamp).ok_or_else(|| {
            Error::Data(format!("line {line}: unparseable timestamp '{}'", row.timestamp))
        })?;
        if !row.power.is_finite() {
            return Err(Error::Data(format!("line {line}: power is not finite")));
        }
        if row.power < 0.0 {
            return Err(Error::Data(format!("line {line}: negative power {}", row.power)));
        }
        if has_forecast {
            let f = row
                .forecast
                .ok_or_else(|| Error::Data(format!("line {line}: missing forecast value")))?;
            forecast.push(f);
        }
        times.push((line, t));
        power.push(row.power);
    }
    let Some(&(_, start)) = times.first() else {
        return Err(Error::Data("series has no rows".into()));
    };
    let step_secs = if times.len() > 1 {
        (times[1].1 - start).num_seconds()
    } else {
        300
    };
    if step_secs <= 0 {
        return Err(Error::Data(format!(
            "line {}: timestamps must increase",
            times[1].0
        )));
    }
    for w in times.windows(2) {
        let gap = (w[1].1 - w[0].1).num_seconds();
        if gap != step_secs {
            return Err(Error::Data(format!(
                "line {}: spacing {gap}s differs from {step_secs}s",
                w[1].0
            )));
        }
    }
    PowerSeries::new(
        start,
        step_secs,
        power,
        has_forecast.then_some(forecast),
        capacity,
    )
}

pub fn save_csv(series: &PowerSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(series, file)
}

/// Values are written in shortest round-trip form, so save → load is exact.
pub fn write_csv<W: std::io::Write>(series: &PowerSeries, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    match &series.forecast {
        Some(_) => out.write_record(["timestamp", "power", "forecast"])?,
        None => out.write_record(["timestamp", "power"])?,
    }
    for (i, p) in series.power.iter().enumerate() {
        let ts = series.timestamp(i).format(TIMESTAMP_FORMAT).to_string();
        match &series.forecast {
            Some(f) => out.write_record([ts, p.to_string(), f[i].to_string()])?,
            None => out.write_record([ts, p.to_string()])?,
        }
    }
    out.flush().map_err(|e| Error::io("series csv", e))?;
    Ok(())
}

/// Divides by nominal capacity; the result has capacity 1.
pub fn normalize(series: &PowerSeries) -> Result<PowerSeries> {
    series.validate()?;
    let cap = series.capacity;
    let scale = |values: &[f64], what: &str| -> Result<Vec<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > cap {
                    Err(Error::Data(format!(
                        "{what} value {v} at index {i} exceeds capacity {cap}"
                    )))
                } else {
                    Ok(v / cap)
                }
            })
            .collect()
    };
    Ok(PowerSeries {
        start: series.start,
        step_secs: series.step_secs,
        power: scale(&series.power, "power")?,
        forecast: series
            .forecast
            .as_deref()
            .map(|f| scale(f, "forecast"))
            .transpose()?,
        capacity: 1.0,
    })
}

/// Last-value persistence: `p̂_{origin+i} = p_origin` for `i = 1..=k`.
pub fn persistence_forecast(values: &[f64], origin: usize, k: usize) -> Result<Vec<f64>> {
    let last = values.get(origin).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "forecast origin {origin} outside series of length {}",
            values.len()
        ))
    })?;
    Ok(vec![*last; k])
}
