//! Latent-space objectives and their gradients, back-propagated through the
//! frozen generator (and critic).

use crate::error::{Error, Result};
use crate::gan::GanModel;
use crate::nn::{Mode, Tensor};

use super::problem::{ForecastProblem, IntervalBounds};

/// Objective value at `z`, the gradient with respect to `z` (empty when not
/// requested or when the value is infinite) and the generated window G(z).
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
    pub output: Vec<f64>,
}

impl Evaluation {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

fn latent(model: &GanModel, z: &[f64]) -> Result<Tensor> {
    if z.len() != model.latent_dim {
        return Err(Error::shape(&[model.latent_dim], &[z.len()]));
    }
    Tensor::new(vec![1, z.len()], z.to_vec())
}

fn check_geometry(model: &GanModel, h: usize, k: usize) -> Result<()> {
    if h + k + 1 != model.window_len() {
        return Err(Error::InvalidArgument(format!(
            "problem spans {} steps (h={h}, k={k}) but the model generates {}",
            h + k + 1,
            model.window_len()
        )));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `r` by `1/‖r‖`; the zero vector maps to zero.
fn norm_grad(r: &[f64], n: f64) -> impl Iterator<Item = f64> + '_ {
    r.iter().map(move |x| if n > 0.0 { x / n } else { 0.0 })
}

/// `‖P_hist(G(z)) − p_hist‖₂ − β Σ log(P_pred(G(z)) − L) − β Σ log(U − P_pred(G(z))) − γ D(G(z))`.
///
/// Returns `+∞` (and no gradient) when any barrier argument is ≤ 0.
pub fn main_objective(z: &[f64], problem: &ForecastProblem, model: &GanModel) -> Result<Evaluation> {
    let bounds = problem.bounds()?;
    main_objective_with(z, problem, &bounds, model, true)
}

pub(crate) fn main_objective_with(
    z: &[f64],
    problem: &ForecastProblem,
    bounds: &IntervalBounds,
    model: &GanModel,
    with_grad: bool,
) -> Result<Evaluation> {
    let (h, k) = (problem.h(), problem.k());
    check_geometry(model, h, k)?;
    let zt = latent(model, z)?;
    let (out, g_tape) = model.generator.forward(&zt, Mode::Frozen)?;
    let output = out.data().to_vec();
    let (hist, pred) = output.split_at(h + 1);

    let mut barrier = 0.0;
    let mut d_out = vec![0.0; output.len()];
    let beta = problem.config.beta;
    for i in 0..k {
        let below = pred[i] - bounds.lower[i];
        let above = bounds.upper[i] - pred[i];
        if !(below > 0.0 && above > 0.0) {
            return Ok(Evaluation {
                value: f64::INFINITY,
                grad: Vec::new(),
                output,
            });
        }
        barrier -= beta * (below.ln() + above.ln());
        d_out[h + 1 + i] = -beta / below + beta / above;
    }

    let resid: Vec<f64> = hist.iter().zip(&problem.p_hist).map(|(a, b)| a - b).collect();
    let fit = norm(&resid);
    for (d, g) in d_out.iter_mut().zip(norm_grad(&resid, fit)) {
        *d += g;
    }

    let gamma = problem.config.gamma;
    let mut realism = 0.0;
    let mut critic_input_grad = None;
    if gamma != 0.0 {
        let (d_val, d_tape) = model.discriminator.forward(&out, Mode::Frozen)?;
        realism = -gamma * d_val.data()[0];
        if with_grad {
            let up = Tensor::filled(vec![1, 1], -gamma);
            critic_input_grad = Some(model.discriminator.backward(&d_tape, &up)?.input);
        }
    }
    let value = fit + barrier + realism;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("objective evaluated to {value}")));
    }
    let grad = if with_grad {
        if let Some(cg) = critic_input_grad {
            for (d, c) in d_out.iter_mut().zip(cg.data()) {
                *d += c;
            }
        }
        let up = Tensor::new(vec![1, d_out.len()], d_out)?;
        model.generator.backward(&g_tape, &up)?.input.into_data()
    } else {
        Vec::new()
    };
    Ok(Evaluation {
        value,
        grad,
        output,
    })
}

/// `‖P_pred(G(z)) − p_initial‖₂`.
pub fn init_objective(z: &[f64], p_initial: &[f64], model: &GanModel, h: usize) -> Result<Evaluation> {
    let k = p_initial.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty initialization target".into()));
    }
    check_geometry(model, h, k)?;
    let zt = latent(model, z)?;
    let (out, g_tape) = model.generator.forward(&zt, Mode::Frozen)?;
    let output = out.data().to_vec();
    let resid: Vec<f64> = output[h + 1..].iter().zip(p_initial).map(|(a, b)| a - b).collect();
    let value = norm(&resid);
    let mut d_out = vec![0.0; output.len()];
    for (d, g) in d_out[h + 1..].iter_mut().zip(norm_grad(&resid, value)) {
        *d = g;
    }
    let up = Tensor::new(vec![1, d_out.len()], d_out)?;
    let grad = model.generator.backward(&g_tape, &up)?.input.into_data();
    Ok(Evaluation {
        value,
        grad,
        output,
    })
}
