//! Series ingestion, normalization, windowing, day-based splitting,
//! synthetic data and persistence forecasts.

mod series;
mod synth;
mod window;

pub use series::{
    load_csv, normalize, parse_timestamp, persistence_forecast, read_csv, save_csv, write_csv,
    PowerSeries, TIMESTAMP_FORMAT,
};
pub use synth::{ar1_noise, synth_generate, SyntheticConfig};
pub use window::{day_aligned_windows, split_by_day, window, window_at, DaySplit, Window};
