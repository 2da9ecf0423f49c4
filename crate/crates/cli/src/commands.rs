use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use scenfc_core::copula::{copula_scenarios, fit_copula};
use scenfc_core::data::{synth_generate, write_csv};
use scenfc_core::forecaster::{feasibility_report, forecast_scenarios, FeasibilityReport};
use scenfc_core::gan::{Checkpoint, GanModel, Trainer, TrainingSet, WindowGeometry};
use scenfc_core::metrics::{crps_curve, mean_autocorrelation, pearson_matrix};
use scenfc_core::Error;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    batch_instance, combo_dir, evenly_spaced, instance_seed, instances, load_dataset, Outputs,
    ScenarioBatch,
};

pub fn synth(config: &RunConfig) -> CliResult<()> {
    let series = synth_generate(&config.synthetic())?;
    let mut out = Outputs::new(&config.output)?;
    out.write_with("series.csv", |b| write_csv(&series, b))?;
    out.finish("synth", config, json!({ "length": series.len() }))
}

pub fn train(config: &RunConfig) -> CliResult<()> {
    let geometry = WindowGeometry::new(config.h, config.k)?;
    let data = load_dataset(config, geometry.h, geometry.k)?;
    let len = geometry.window_len();
    let picked = evenly_spaced(data.train.len(), config.max_windows.unwrap_or(0));
    let rows = picked.iter().map(|&i| data.train[i].values()).collect();
    let set = TrainingSet::new(rows, len)?;

    let mut trainer = match &config.resume {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let mut ck: Checkpoint = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            if ck.model.geometry != geometry {
                return Err(CliError::Usage(format!(
                    "checkpoint geometry (h={}, k={}) differs from the config (h={}, k={})",
                    ck.model.geometry.h, ck.model.geometry.k, geometry.h, geometry.k
                )));
            }
            ck.config.iterations = config.iterations;
            Trainer::from_checkpoint(ck)?
        }
        None => {
            let model = GanModel::new(geometry, config.arch, config.hidden, config.seed)?;
            Trainer::new(model, config.training())?
        }
    };

    let mut out = Outputs::new(&config.output)?;
    let every = config.checkpoint_every;
    let ck_path = out.path("checkpoint.json".as_ref());
    trainer.run(&set, |t| {
        if every > 0 && t.iteration() % every == 0 {
            let text = serde_json::to_string(&t.checkpoint())?;
            std::fs::write(&ck_path, text).map_err(|e| CliError::io(&ck_path, e))?;
        }
        Ok::<(), CliError>(())
    })?;

    let checkpoint = serde_json::to_string(&trainer.checkpoint())?;
    out.write("checkpoint.json", checkpoint.as_bytes())?;
    let iterations = trainer.iteration();
    let (model, log) = trainer.into_parts();
    out.write("model.json", model.to_json()?.as_bytes())?;
    out.write_with("trainlog.csv", |b| log.write_csv(b))?;
    let last = log.records.last();
    out.finish(
        "train",
        config,
        json!({
            "model_id": model.id(),
            "iterations": iterations,
            "training_windows": set.len(),
            "final_mean_d_real": last.map(|r| r.mean_real),
            "final_mean_d_fake": last.map(|r| r.mean_fake),
        }),
    )
}

#[derive(Serialize)]
struct ComboReport {
    k: usize,
    alpha: f64,
    scenarios: usize,
    feasible: usize,
    instances: Vec<FeasibilityReport>,
}

fn horizons(config: &RunConfig, default: usize) -> Vec<usize> {
    if config.horizons.is_empty() {
        vec![default]
    } else {
        config.horizons.clone()
    }
}

fn write_batch(out: &mut Outputs, dir: &std::path::Path, batch: &ScenarioBatch) -> CliResult<ComboReport> {
    let mut reports = Vec::with_capacity(batch.instances.len());
    for (j, inst) in batch.instances.iter().enumerate() {
        out.write_with(dir.join(format!("instance_{j:03}.csv")), |b| inst.set.write_csv(b))?;
        reports.push(feasibility_report(&inst.set)?);
    }
    out.write_json(dir.join("scenarios.json"), batch)?;
    let report = ComboReport {
        k: batch.k,
        alpha: batch.alpha,
        scenarios: reports.iter().map(|r| r.scenarios).sum(),
        feasible: reports.iter().map(|r| r.feasible).sum(),
        instances: reports,
    };
    out.write_json(dir.join("report.json"), &report)?;
    Ok(report)
}

pub fn forecast(config: &RunConfig) -> CliResult<()> {
    let model_path = config
        .model
        .as_deref()
        .ok_or_else(|| CliError::Usage("no model given (set `model` or --model)".into()))?;
    let model = GanModel::load(model_path)?;
    let geometry = model.geometry;
    let len = model.window_len();
    let data = load_dataset(config, geometry.h, geometry.k)?;
    let model_id = model.id();

    let mut out = Outputs::new(&config.output)?;
    let mut summary = Vec::new();
    let (mut total, mut feasible) = (0, 0);
    for k in horizons(config, geometry.k) {
        for alpha in config.alpha_list() {
            let search = config.search(alpha);
            let insts = instances(&data, len, k, &search, config.instances)?;
            let mut batch = ScenarioBatch {
                method: "gan".into(),
                h: len - k - 1,
                k,
                alpha,
                seed: config.seed,
                model_id: Some(model_id.clone()),
                instances: Vec::with_capacity(insts.len()),
            };
            for (j, inst) in insts.iter().enumerate() {
                let set = forecast_scenarios(&inst.problem, &model, instance_seed(config.seed, j))?;
                batch.instances.push(batch_instance(&inst.window, set));
            }
            let report = write_batch(&mut out, &combo_dir(k, alpha), &batch)?;
            total += report.scenarios;
            feasible += report.feasible;
            summary.push(json!({ "k": k, "alpha": alpha, "scenarios": report.scenarios, "feasible": report.feasible }));
        }
    }
    out.finish(
        "forecast",
        config,
        json!({ "model_id": model_id, "h": geometry.h, "k": geometry.k, "combinations": summary }),
    )?;
    if total > 0 && feasible == 0 {
        return Err(CliError::Numerical(format!(
            "none of {total} scenarios ended inside its prediction interval"
        )));
    }
    Ok(())
}

pub fn copula(config: &RunConfig) -> CliResult<()> {
    let geometry = WindowGeometry::new(config.h, config.k)?;
    let len = geometry.window_len();
    let data = load_dataset(config, geometry.h, geometry.k)?;
    let mut out = Outputs::new(&config.output)?;
    let mut summary = Vec::new();
    for k in horizons(config, geometry.k) {
        if k == 0 || k >= len {
            return Err(CliError::Usage(format!("horizon {k} must lie in 1..{len}")));
        }
        let segments: Vec<Vec<f64>> = data.train.iter().map(|w| w.values()[len - k..].to_vec()).collect();
        let fitted = fit_copula(&segments, k)?;
        out.write_json(PathBuf::from(format!("copula_k{k}.json")), &fitted)?;
        for alpha in config.alpha_list() {
            let search = config.search(alpha);
            let insts = instances(&data, len, k, &search, config.instances)?;
            let mut batch = ScenarioBatch {
                method: "copula".into(),
                h: len - k - 1,
                k,
                alpha,
                seed: config.seed,
                model_id: None,
                instances: Vec::with_capacity(insts.len()),
            };
            for (j, inst) in insts.iter().enumerate() {
                let set = copula_scenarios(&fitted, &inst.problem, instance_seed(config.seed, j))?;
                batch.instances.push(batch_instance(&inst.window, set));
            }
            let report = write_batch(&mut out, &combo_dir(k, alpha), &batch)?;
            summary.push(json!({ "k": k, "alpha": alpha, "scenarios": report.scenarios, "feasible": report.feasible }));
        }
    }
    out.finish("copula", config, json!({ "combinations": summary }))
}

#[derive(Serialize)]
struct SetSummary {
    label: String,
    method: String,
    k: usize,
    alpha: f64,
    instances: usize,
    scenarios: usize,
    feasible_fraction: f64,
    mean_crps: f64,
    crps: Vec<f64>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct EvalReport {
    k: usize,
    instances: usize,
    sets: Vec<SetSummary>,
    lowest_mean_crps: String,
    /// `mean_crps(gan) < mean_crps(copula)` when both methods are present.
    gan_below_copula: Option<bool>,
    notes: Vec<String>,
}

/// Degenerate inputs (e.g. constant scenarios) become report notes instead
/// of failures; anything else propagates.
fn tolerate<T>(r: scenfc_core::Result<T>, notes: &mut Vec<String>, what: &str) -> CliResult<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Degenerate(m)) => {
            notes.push(format!("{what}: {m}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn eval(config: &RunConfig) -> CliResult<()> {
    if config.sets.is_empty() {
        return Err(CliError::Usage(
            "no scenario sets to evaluate (set `sets` or pass --scenarios)".into(),
        ));
    }
    let batches = config
        .sets
        .iter()
        .map(|p| ScenarioBatch::load(p))
        .collect::<CliResult<Vec<_>>>()?;
    let reference = &batches[0];
    let k = reference.k;
    for (b, path) in batches.iter().zip(&config.sets).skip(1) {
        let aligned = b.k == k
            && b.instances.len() == reference.instances.len()
            && b.instances.iter().zip(&reference.instances).all(|(x, y)| {
                x.start == y.start && x.realization == y.realization
            });
        if !aligned {
            return Err(CliError::Data(format!(
                "{} is not aligned with {} (instances, horizon or realizations differ)",
                path.display(),
                config.sets[0].display()
            )));
        }
    }
    if reference.instances.is_empty() {
        return Err(CliError::Data("scenario sets contain no instances".into()));
    }
    let k_max = config.k_max.unwrap_or(k.saturating_sub(1)).min(k.saturating_sub(1));
    let mut out = Outputs::new(&config.output)?;
    let mut notes = Vec::new();

    let observed: Vec<Vec<f64>> = reference.instances.iter().map(|i| i.realization.clone()).collect();
    if k_max > 0 {
        if let Some(c) = tolerate(mean_autocorrelation(&observed, k_max), &mut notes, "observed autocorrelation")? {
            out.write_with("observed_autocorr.csv", |b| c.write_csv(b))?;
        }
    }
    if let Some(m) = tolerate(pearson_matrix(&observed), &mut notes, "observed correlation")? {
        out.write_with("observed_correlation.csv", |b| m.write_csv(b))?;
    }

    let mut labels = std::collections::BTreeSet::new();
    let mut sets = Vec::with_capacity(batches.len());
    for batch in &batches {
        let mut label = batch.label();
        let mut n = 2;
        while !labels.insert(label.clone()) {
            label = format!("{}_{n}", batch.label());
            n += 1;
        }
        let mut set_notes = Vec::new();
        let scenario_sets: Vec<Vec<Vec<f64>>> = batch.instances.iter().map(|i| i.set.values()).collect();
        let curve = crps_curve(&scenario_sets, &observed)?;
        out.write_with(format!("{label}_crps.csv"), |b| curve.write_csv(b))?;
        let pooled: Vec<Vec<f64>> = scenario_sets.iter().flatten().cloned().collect();
        if k_max > 0 {
            if let Some(c) = tolerate(mean_autocorrelation(&pooled, k_max), &mut set_notes, "autocorrelation")? {
                out.write_with(format!("{label}_autocorr.csv"), |b| c.write_csv(b))?;
            }
        }
        if let Some(m) = tolerate(pearson_matrix(&pooled), &mut set_notes, "correlation")? {
            out.write_with(format!("{label}_correlation.csv"), |b| m.write_csv(b))?;
        }
        let scenarios = pooled.len();
        let feasible = batch
            .instances
            .iter()
            .flat_map(|i| &i.set.scenarios)
            .filter(|s| s.feasible)
            .count();
        sets.push(SetSummary {
            label,
            method: batch.method.clone(),
            k: batch.k,
            alpha: batch.alpha,
            instances: batch.instances.len(),
            scenarios,
            feasible_fraction: if scenarios == 0 { 0.0 } else { feasible as f64 / scenarios as f64 },
            mean_crps: curve.values.iter().sum::<f64>() / curve.values.len() as f64,
            crps: curve.values,
            notes: set_notes,
        });
    }

    let best = sets
        .iter()
        .min_by(|a, b| a.mean_crps.total_cmp(&b.mean_crps))
        .map(|s| s.label.clone())
        .unwrap_or_default();
    let method_mean = |m: &str| {
        sets.iter()
            .filter(|s| s.method == m)
            .map(|s| s.mean_crps)
            .min_by(f64::total_cmp)
    };
    let gan_below_copula = match (method_mean("gan"), method_mean("copula")) {
        (Some(g), Some(c)) => Some(g < c),
        _ => None,
    };
    if sets.iter().any(|s| s.method == "copula") {
        notes.push("copula scenarios are unconditional; GAN scenarios are conditioned on history".into());
    }
    let report = EvalReport {
        k,
        instances: reference.instances.len(),
        sets,
        lowest_mean_crps: best,
        gan_below_copula,
        notes,
    };
    out.write_json("report.json", &report)?;
    out.write("report.txt", render_report(&report).as_bytes())?;
    out.finish("eval", config, json!({ "lowest_mean_crps": report.lowest_mean_crps }))
}

fn render_report(r: &EvalReport) -> String {
    let mut s = format!("CRPS comparison over {} instances, {} lead times\n\n", r.instances, r.k);
    s.push_str(&format!("{:<28} {:>10} {:>10}\n", "set", "mean CRPS", "feasible"));
    for set in &r.sets {
        s.push_str(&format!(
            "{:<28} {:>10.6} {:>10.3}\n",
            set.label, set.mean_crps, set.feasible_fraction
        ));
    }
    s.push_str("\nlead");
    for set in &r.sets {
        s.push_str(&format!(" {:>14}", set.label));
    }
    s.push('\n');
    for lead in 0..r.k {
        s.push_str(&format!("{:>4}", lead + 1));
        for set in &r.sets {
            s.push_str(&format!(" {:>14.6}", set.crps[lead]));
        }
        s.push('\n');
    }
    s.push_str(&format!("\nlowest mean CRPS: {}\n", r.lowest_mean_crps));
    match r.gan_below_copula {
        Some(true) => s.push_str("GAN scenarios score below the copula baseline\n"),
        Some(false) => s.push_str("GAN scenarios do not score below the copula baseline\n"),
        None => {}
    }
    for n in &r.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    s
}
