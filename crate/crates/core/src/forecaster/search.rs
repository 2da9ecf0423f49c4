//! Multi-start momentum descent over the latent hypercube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{init_objective, main_objective_with, Evaluation};
use super::problem::{ForecastProblem, IntervalBounds};
use crate::error::{Error, Result};
use crate::gan::{uniform_open, GanModel};
use crate::nn::{clip_in_place, Momentum};

/// Backtracking halves the step at most this many times.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    pub z: Vec<f64>,
    pub p_initial: Vec<f64>,
    /// Largest |z_i| seen after any step, including the raw draw.
    pub max_abs_z: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Samples a target inside the α_sub interval and a uniform `z`, then runs
/// `n_init` clipped momentum steps on the initialization objective.
pub fn find_initial_z<R: Rng + ?Sized>(
    problem: &ForecastProblem,
    model: &GanModel,
    rng: &mut R,
) -> Result<InitialPoint> {
    let sub = problem.init_bounds()?;
    let p_initial: Vec<f64> = sub
        .lower
        .iter()
        .zip(&sub.upper)
        .map(|(&l, &u)| Uniform::new(l, u).map(|d| d.sample(rng)))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("initialization interval: {e}")))?;
    let mut z = uniform_open(model.latent_dim, rng);
    let mut max_z = max_abs(&z);
    let cfg = &problem.config;
    let mut momentum = Momentum::new(cfg.momentum, z.len())?;
    for _ in 0..cfg.n_init {
        let eval = init_objective(&z, &p_initial, model, problem.h())?;
        momentum.step(&mut z, &eval.grad, cfg.step_size)?;
        clip_in_place(&mut z, -1.0, 1.0)?;
        max_z = max_z.max(max_abs(&z));
    }
    Ok(InitialPoint {
        z,
        p_initial,
        max_abs_z: max_z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// P_pred(G(z*)), length k.
    pub values: Vec<f64>,
    /// P_hist(G(z*)), length h+1.
    pub history: Vec<f64>,
    pub latent: Vec<f64>,
    /// Final main-objective value; `None` when the search never became feasible.
    pub objective: Option<f64>,
    pub feasible: bool,
    pub restarts: usize,
    /// Steps where no backtracked step size stayed inside the barriers.
    pub skipped_steps: usize,
    pub max_abs_z: f64,
}

/// A set of scenarios for one forecast instance plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    /// `"gan"` or `"copula"`.
    pub method: String,
    pub model_id: Option<String>,
    pub seed: u64,
    pub problem: ForecastProblem,
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.scenarios.iter().map(|s| s.values.clone()).collect()
    }

    /// Long-format CSV: `scenario_id,lead_index,value,feasible`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario_id", "lead_index", "value", "feasible"])?;
        for (i, s) in self.scenarios.iter().enumerate() {
            for (lead, v) in s.values.iter().enumerate() {
                out.write_record([
                    i.to_string(),
                    (lead + 1).to_string(),
                    v.to_string(),
                    s.feasible.to_string(),
                ])?;
            }
        }
        out.flush().map_err(|e| Error::io("scenario csv", e))?;
        Ok(())
    }
}

/// Runs the barrier-objective descent from `z`; the start must be feasible.
fn descend(
    problem: &ForecastProblem,
    bounds: &IntervalBounds,
    model: &GanModel,
    mut z: Vec<f64>,
    mut current: Evaluation,
    max_z: &mut f64,
) -> Result<(Vec<f64>, Evaluation, usize)> {
    let cfg = &problem.config;
    let mut momentum = Momentum::new(cfg.momentum, z.len())?;
    let mut skipped = 0;
    let mut candidate = vec![0.0; z.len()];
    for _ in 0..cfg.n_scen {
        let velocity = momentum.advance(&current.grad).to_vec();
        let mut step = cfg.step_size;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            for ((c, zi), v) in candidate.iter_mut().zip(&z).zip(&velocity) {
                *c = zi - step * v;
            }
            clip_in_place(&mut candidate, -1.0, 1.0)?;
            let eval = main_objective_with(&candidate, problem, bounds, model, true)?;
            if eval.is_finite() {
                accepted = Some(eval);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(eval) => {
                z.copy_from_slice(&candidate);
                *max_z = max_z.max(max_abs(&z));
                current = eval;
            }
            None => {
                skipped += 1;
                momentum.reset();
            }
        }
    }
    Ok((z, current, skipped))
}

fn solve_one(
    problem: &ForecastProblem,
    bounds: &IntervalBounds,
    model: &GanModel,
    rng: &mut ChaCha8Rng,
) -> Result<Scenario> {
    let h = problem.h();
    let mut max_z: f64 = 0.0;
    let mut last = None;
    for attempt in 0..=problem.config.max_restarts {
        let init = find_initial_z(problem, model, rng)?;
        max_z = max_z.max(init.max_abs_z);
        let start = main_objective_with(&init.z, problem, bounds, model, true)?;
        if start.is_finite() {
            let (z, eval, skipped) = descend(problem, bounds, model, init.z, start, &mut max_z)?;
            let (history, values) = eval.output.split_at(h + 1);
            return Ok(Scenario {
                feasible: bounds.strictly_contains(values),
                values: values.to_vec(),
                history: history.to_vec(),
                latent: z,
                objective: Some(eval.value),
                restarts: attempt,
                skipped_steps: skipped,
                max_abs_z: max_z,
            });
        }
        last = Some((init.z, start));
    }
    let (z, eval) = last.expect("at least one attempt");
    let (history, values) = eval.output.split_at(h + 1);
    Ok(Scenario {
        values: values.to_vec(),
        history: history.to_vec(),
        latent: z,
        objective: None,
        feasible: false,
        restarts: problem.config.max_restarts,
        skipped_steps: 0,
        max_abs_z: max_z,
    })
}

/// Per-scenario random stream: ChaCha8 keyed by `seed`, stream = index.
pub fn scenario_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Finds `N` scenarios, each from its own random start. Scenarios are
/// independent and solved in parallel; output order is the scenario index.
pub fn forecast_scenarios(problem: &ForecastProblem, model: &GanModel, seed: u64) -> Result<ScenarioSet> {
    problem.validate()?;
    model.validate()?;
    if problem.h() + problem.k() + 1 != model.window_len() {
        return Err(Error::InvalidArgument(format!(
            "problem spans {} steps but the model generates {}",
            problem.h() + problem.k() + 1,
            model.window_len()
        )));
    }
    if problem.p_hist.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("history values must lie in [0, 1]".into()));
    }
    let bounds = problem.bounds()?;
    let scenarios = (0..problem.config.n_scenarios)
        .into_par_iter()
        .map(|i| solve_one(problem, &bounds, model, &mut scenario_rng(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSet {
        method: "gan".into(),
        model_id: Some(model.id()),
        seed,
        problem: problem.clone(),
        scenarios,
    })
}
