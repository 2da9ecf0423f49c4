//! Trains on synthetic AR(1)+diurnal data and compares generated statistics
//! with the training set.
//!
//! cargo run --release -p scenfc-core --example desk_train -- [iterations] [lr] [clip] [arch]

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenfc_core::data::{synth_generate, window, SyntheticConfig};
use scenfc_core::gan::{Architecture, GanModel, TrainConfig, Trainer, TrainingSet, WindowGeometry};
use scenfc_core::metrics::mean_autocorrelation;

fn stats(rows: &[Vec<f64>]) -> (f64, f64, f64) {
    let all: Vec<f64> = rows.iter().flatten().copied().collect();
    let m = all.iter().sum::<f64>() / all.len() as f64;
    let sd = (all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
    let r1 = mean_autocorrelation(rows, 1).map(|c| c.values[1]).unwrap_or(f64::NAN);
    (m, sd, r1)
}

fn main() -> scenfc_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let iterations = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let lr = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5e-4);
    let clip = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let arch = match args.get(4).map(String::as_str) {
        Some("dense") => Architecture::Dense,
        Some("mlp") => Architecture::Mlp,
        _ => Architecture::Conv,
    };

    let geometry = WindowGeometry::new(23, 8)?;
    let len = geometry.window_len();
    let synth = SyntheticConfig {
        rho: 0.8,
        length: 4 * 5000 + len,
        seed: 1,
        ..Default::default()
    };
    let series = synth_generate(&synth)?;
    let windows: Vec<Vec<f64>> = window(&series, geometry.h, geometry.k, 4)?
        .into_iter()
        .take(5000)
        .map(|w| w.values())
        .collect();
    let (m, sd, r1) = stats(&windows);
    println!("train: n={} mean={m:.4} std={sd:.4} r1={r1:.4}", windows.len());

    let data = TrainingSet::new(windows, len)?;
    let model = GanModel::new(geometry, arch, 64, 7)?;
    let config = TrainConfig {
        learning_rate: lr,
        clip,
        iterations,
        seed: 11,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, config)?;
    let start = Instant::now();
    trainer.run(&data, |t| {
        let i = t.iteration();
        if i % 250 == 0 {
            let r = t.log().records.last().unwrap();
            let gen = t.model().generate(1000, &mut ChaCha8Rng::seed_from_u64(5))?;
            let (gm, gsd, gr1) = stats(&gen);
            println!(
                "it {i:5} {:6.1}s  D(x)={:+.5} D(G)={:+.5}  gen mean={gm:.4} std={gsd:.4} r1={gr1:.4}",
                start.elapsed().as_secs_f64(),
                r.mean_real,
                r.mean_fake
            );
        }
        Ok::<(), scenfc_core::Error>(())
    })?;
    Ok(())
}
