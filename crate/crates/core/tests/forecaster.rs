//! Latent-space search: objective values, gradients against central finite
//! differences, barrier soundness and determinism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenfc_core::forecaster::{
    feasibility_report, find_initial_z, forecast_scenarios, init_objective, main_objective,
    ForecastProblem, SearchConfig,
};
use scenfc_core::gan::{Architecture, GanModel, WindowGeometry};
use scenfc_core::nn::{Mode, Tensor};

const FD_EPS: f64 = 1e-6;
const H: usize = 7;
const K: usize = 4;

/// Untrained model whose outputs sit near `level`, with weights scaled up so
/// the map from `z` is visibly nonlinear.
fn model(arch: Architecture, level: f64) -> GanModel {
    let geo = WindowGeometry::new(H, K).unwrap();
    let mut m = GanModel::new(geo, arch, 16, 3).unwrap();
    for net in [&mut m.generator, &mut m.discriminator] {
        for p in net.params.layers.iter_mut().flatten() {
            for w in p.weight.data_mut() {
                *w *= 5.0;
            }
        }
    }
    let last = m.generator.params.layers.last_mut().unwrap().as_mut().unwrap();
    for b in last.bias.data_mut() {
        *b = level;
    }
    m
}

fn gen(m: &GanModel, z: &[f64]) -> Vec<f64> {
    let zt = Tensor::new(vec![1, z.len()], z.to_vec()).unwrap();
    m.generate_from(&zt, Mode::Frozen).unwrap().into_data()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn fd_grad_with(f: impl Fn(&[f64]) -> f64, z: &[f64], eps: f64) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let mut p = z.to_vec();
            p[i] = z[i] + eps;
            let up = f(&p);
            p[i] = z[i] - eps;
            let down = f(&p);
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// A point is smooth when halving the difference step leaves the estimate
/// unchanged; otherwise a ReLU kink lies within the stencil and central
/// differences are not a valid oracle there.
fn smooth_fd(f: impl Fn(&[f64]) -> f64, z: &[f64]) -> Option<Vec<f64>> {
    let coarse = fd_grad_with(&f, z, FD_EPS);
    let fine = fd_grad_with(&f, z, FD_EPS / 2.0);
    (rel_err(&coarse, &fine) < 1e-6).then_some(coarse)
}

fn interior(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-0.9..0.9)).collect()
}

fn problem_around(m: &GanModel, z: &[f64], alpha: f64, rng: &mut ChaCha8Rng) -> ForecastProblem {
    let out = gen(m, z);
    let p_hist = out[..=H].iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
    let p_pred = out[H + 1..].to_vec();
    let config = SearchConfig {
        alpha,
        ..SearchConfig::default()
    };
    ForecastProblem::new(p_hist, p_pred, config).unwrap()
}

#[test]
fn main_objective_gradient_matches_finite_differences() {
    for arch in [Architecture::Dense, Architecture::Conv] {
        let m = model(arch, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (mut worst, mut checked, mut kinked) = (0.0f64, 0, 0);
        while checked < 50 {
            let z = interior(&mut rng, m.latent_dim);
            if gen(&m, &z)[H + 1..].iter().any(|v| *v < 0.05) {
                continue;
            }
            let problem = problem_around(&m, &z, 1.3, &mut rng);
            let eval = main_objective(&z, &problem, &m).unwrap();
            assert!(eval.value.is_finite());
            match smooth_fd(|p| main_objective(p, &problem, &m).unwrap().value, &z) {
                Some(fd) => {
                    worst = worst.max(rel_err(&eval.grad, &fd));
                    checked += 1;
                }
                None => kinked += 1,
            }
        }
        assert!(kinked <= 5, "{arch:?}: {kinked} non-smooth draws");
        assert!(worst < 1e-5, "{arch:?}: worst relative error {worst:e}");
    }
}

#[test]
fn init_objective_gradient_matches_finite_differences() {
    for arch in [Architecture::Dense, Architecture::Conv] {
        let m = model(arch, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut worst, mut checked, mut kinked) = (0.0f64, 0, 0);
        while checked < 50 {
            let z = interior(&mut rng, m.latent_dim);
            let target: Vec<f64> = (0..K).map(|_| rng.random_range(0.2..0.8)).collect();
            let eval = init_objective(&z, &target, &m, H).unwrap();
            assert!(eval.value >= 0.0);
            match smooth_fd(|p| init_objective(p, &target, &m, H).unwrap().value, &z) {
                Some(fd) => {
                    worst = worst.max(rel_err(&eval.grad, &fd));
                    checked += 1;
                }
                None => kinked += 1,
            }
        }
        assert!(kinked <= 5, "{arch:?}: {kinked} non-smooth draws");
        assert!(worst < 1e-5, "{arch:?}: worst relative error {worst:e}");
    }
}

#[test]
fn init_objective_is_zero_at_target() {
    let m = model(Architecture::Dense, 0.5);
    let z = vec![0.1; m.latent_dim];
    let target = gen(&m, &z)[H + 1..].to_vec();
    let eval = init_objective(&z, &target, &m, H).unwrap();
    assert_eq!(eval.value, 0.0);
    assert!(eval.grad.iter().all(|g| *g == 0.0));
}

#[test]
fn exact_history_without_barrier_or_critic_is_zero() {
    let m = model(Architecture::Dense, 0.5);
    let z = vec![-0.2; m.latent_dim];
    let out = gen(&m, &z);
    let config = SearchConfig {
        beta: 0.0,
        gamma: 0.0,
        ..SearchConfig::default()
    };
    let problem = ForecastProblem::new(out[..=H].to_vec(), out[H + 1..].to_vec(), config).unwrap();
    assert_eq!(main_objective(&z, &problem, &m).unwrap().value, 0.0);
}

#[test]
fn prediction_on_a_bound_is_infinite() {
    let m = model(Architecture::Dense, 0.5);
    let z = vec![0.3; m.latent_dim];
    let out = gen(&m, &z);
    // with alpha = 2 the lower bound (2s)/2 reproduces s exactly
    let p_pred: Vec<f64> = out[H + 1..].iter().map(|s| 2.0 * s).collect();
    let config = SearchConfig {
        alpha: 2.0,
        ..SearchConfig::default()
    };
    let problem = ForecastProblem::new(out[..=H].to_vec(), p_pred, config).unwrap();
    let bounds = problem.bounds().unwrap();
    assert_eq!(bounds.lower, out[H + 1..].to_vec());
    let eval = main_objective(&z, &problem, &m).unwrap();
    assert_eq!(eval.value, f64::INFINITY);
    assert!(eval.grad.is_empty());
}

#[test]
fn finite_exactly_inside_the_interval() {
    let m = model(Architecture::Dense, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let problem = problem_around(&m, &vec![0.0; m.latent_dim], 1.2, &mut rng);
    let bounds = problem.bounds().unwrap();
    for _ in 0..200 {
        let z: Vec<f64> = (0..m.latent_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let pred = gen(&m, &z)[H + 1..].to_vec();
        let value = main_objective(&z, &problem, &m).unwrap().value;
        assert_eq!(value.is_finite(), bounds.strictly_contains(&pred));
    }
}

#[test]
fn geometry_mismatch_is_rejected() {
    let m = model(Architecture::Dense, 0.5);
    let config = SearchConfig::default();
    let problem = ForecastProblem::new(vec![0.5; 3], vec![0.5; 2], config).unwrap();
    assert!(main_objective(&vec![0.0; m.latent_dim], &problem, &m).is_err());
    assert!(forecast_scenarios(&problem, &m, 0).is_err());
}

#[test]
fn initial_z_without_steps_is_the_raw_draw() {
    let m = model(Architecture::Dense, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut problem = problem_around(&m, &vec![0.0; m.latent_dim], 2.0, &mut rng);
    problem.config.n_init = 0;
    let mut a = ChaCha8Rng::seed_from_u64(5);
    let init = find_initial_z(&problem, &m, &mut a).unwrap();
    // replay: K uniform targets, then the latent draw
    let mut b = ChaCha8Rng::seed_from_u64(5);
    let sub = problem.init_bounds().unwrap();
    for i in 0..K {
        let t = b.random_range(sub.lower[i]..sub.upper[i]);
        assert_eq!(t, init.p_initial[i]);
    }
    let z = scenfc_core::gan::sample_noise(1, m.latent_dim, &mut b).unwrap();
    assert_eq!(z.data(), &init.z[..]);
    assert!(init.z.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn initialization_usually_descends() {
    let m = model(Architecture::Dense, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let problem = problem_around(&m, &vec![0.0; m.latent_dim], 2.0, &mut rng);
    let mut improved = 0;
    for trial in 0..100 {
        let mut raw = problem.clone();
        raw.config.n_init = 0;
        let start = find_initial_z(&raw, &m, &mut ChaCha8Rng::seed_from_u64(trial)).unwrap();
        let end = find_initial_z(&problem, &m, &mut ChaCha8Rng::seed_from_u64(trial)).unwrap();
        assert_eq!(start.p_initial, end.p_initial);
        assert!(end.max_abs_z <= 1.0);
        let before = init_objective(&start.z, &start.p_initial, &m, H).unwrap().value;
        let after = init_objective(&end.z, &end.p_initial, &m, H).unwrap().value;
        if after <= before {
            improved += 1;
        }
    }
    assert!(improved >= 90, "improved on {improved}/100");
}

fn small_config(alpha: f64, n: usize) -> SearchConfig {
    SearchConfig {
        alpha,
        n_scenarios: n,
        n_init: 40,
        n_scen: 60,
        ..SearchConfig::default()
    }
}

#[test]
fn scenarios_are_feasible_deterministic_and_bounded() {
    let m = model(Architecture::Dense, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut problem = problem_around(&m, &vec![0.0; m.latent_dim], 1.5, &mut rng);
    problem.config = small_config(1.5, 8);
    let set = forecast_scenarios(&problem, &m, 77).unwrap();
    assert_eq!(set.len(), 8);
    let bounds = problem.bounds().unwrap();
    for s in &set.scenarios {
        assert_eq!(s.values.len(), K);
        assert_eq!(s.history.len(), H + 1);
        assert!(s.max_abs_z <= 1.0);
        assert!(s.latent.iter().all(|v| v.abs() <= 1.0));
        if s.feasible {
            assert!(bounds.strictly_contains(&s.values));
            assert!(s.objective.unwrap().is_finite());
        }
    }
    let again = forecast_scenarios(&problem, &m, 77).unwrap();
    assert_eq!(
        serde_json::to_string(&set).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
    let other = forecast_scenarios(&problem, &m, 78).unwrap();
    assert_ne!(set.scenarios[0].latent, other.scenarios[0].latent);
    // distinct streams give distinct scenarios
    assert_ne!(set.scenarios[0].latent, set.scenarios[1].latent);
}

#[test]
fn empty_request_gives_empty_set() {
    let m = model(Architecture::Dense, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut problem = problem_around(&m, &vec![0.0; m.latent_dim], 2.0, &mut rng);
    problem.config = small_config(2.0, 0);
    let set = forecast_scenarios(&problem, &m, 0).unwrap();
    assert!(set.is_empty());
    let report = feasibility_report(&set).unwrap();
    assert_eq!(report.feasible_fraction, None);
}

#[test]
fn unreachable_interval_is_flagged_not_dropped() {
    // outputs near 0.5 can never reach an interval around 0.01
    let m = model(Architecture::Dense, 0.5);
    let mut config = small_config(1.5, 3);
    config.n_init = 5;
    let problem = ForecastProblem::new(vec![0.5; H + 1], vec![0.01; K], config).unwrap();
    let set = forecast_scenarios(&problem, &m, 4).unwrap();
    assert_eq!(set.len(), 3);
    for s in &set.scenarios {
        assert!(!s.feasible);
        assert_eq!(s.objective, None);
        assert_eq!(s.restarts, problem.config.max_restarts);
    }
    let report = feasibility_report(&set).unwrap();
    assert_eq!(report.feasible, 0);
    assert_eq!(report.feasible_fraction, Some(0.0));
}

#[test]
fn report_recomputes_from_raw_scenarios() {
    let m = model(Architecture::Dense, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut problem = problem_around(&m, &vec![0.0; m.latent_dim], 2.0, &mut rng);
    problem.config = small_config(2.0, 5);
    let set = forecast_scenarios(&problem, &m, 9).unwrap();
    let report = feasibility_report(&set).unwrap();
    let (lo, hi): (Vec<f64>, Vec<f64>) =
        problem.p_pred.iter().map(|p| (p / 2.0, p * 2.0)).unzip();
    let mut mismatches = Vec::new();
    for (s, m) in set.scenarios.iter().zip(&report.margins) {
        // regenerate the window from the stored latent
        let out = gen(&model(Architecture::Dense, 0.5), &s.latent);
        assert_eq!(out[H + 1..], s.values[..]);
        let lower = (0..K).map(|i| out[H + 1 + i] - lo[i]).fold(f64::MAX, f64::min);
        let upper = (0..K).map(|i| hi[i] - out[H + 1 + i]).fold(f64::MAX, f64::min);
        let mis = (0..=H)
            .map(|i| (out[i] - problem.p_hist[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((lower - m.lower).abs() < 1e-12);
        assert!((upper - m.upper).abs() < 1e-12);
        assert!((mis - m.history_mismatch).abs() < 1e-12);
        if s.feasible {
            assert!(m.lower > 0.0 && m.upper > 0.0);
        }
        mismatches.push(mis);
    }
    let mean = mismatches.iter().sum::<f64>() / mismatches.len() as f64;
    assert!((mean - report.mismatch_mean.unwrap()).abs() < 1e-12);
    if report.feasible == report.scenarios {
        assert_eq!(report.feasible_fraction, Some(1.0));
    }
}

#[test]
fn model_round_trips_bit_exactly() {
    let m = model(Architecture::Conv, 0.5);
    let text = m.to_json().unwrap();
    let back = GanModel::from_json(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.id(), m.id());
    assert_eq!(back.to_json().unwrap(), text);
    let tampered = text.replace("scenfc-model/1", "scenfc-model/0");
    assert!(GanModel::from_json(&tampered).is_err());
}
