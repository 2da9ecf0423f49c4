use serde::{Deserialize, Serialize};

use super::network::ParameterSet;
use crate::error::{Error, Result};

pub const RMSPROP_DECAY: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-8;

/// RMSProp with the epsilon inside the square root:
/// `acc ← ρ·acc + (1−ρ)·g²`, `θ ← θ − η·g/√(acc+ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
    acc: Vec<Vec<f64>>,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self::new(RMSPROP_DECAY, RMSPROP_EPS)
    }
}

impl RmsProp {
    pub fn new(decay: f64, eps: f64) -> Self {
        Self {
            decay,
            eps,
            acc: Vec::new(),
        }
    }

    /// Squared-gradient accumulators, one per parameter tensor.
    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.acc
    }

    /// Updates `values` in place from `grads` using the accumulator slot `slot`.
    pub fn step_slice(&mut self, slot: usize, values: &mut [f64], grads: &[f64], lr: f64) {
        if self.acc.len() <= slot {
            self.acc.resize(slot + 1, Vec::new());
        }
        let acc = &mut self.acc[slot];
        if acc.len() != values.len() {
            *acc = vec![0.0; values.len()];
        }
        let (rho, eps) = (self.decay, self.eps);
        for ((v, &g), a) in values.iter_mut().zip(grads).zip(acc.iter_mut()) {
            *a = rho * *a + (1.0 - rho) * g * g;
            let denom = (*a + eps).sqrt();
            if denom > 0.0 {
                *v -= lr * g / denom;
            }
        }
    }

    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if params.num_values() != grads.num_values() || params.layers.len() != grads.layers.len() {
            return Err(Error::shape(&[params.num_values()], &[grads.num_values()]));
        }
        for (slot, (p, g)) in params.tensors_mut().zip(grads.tensors()).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape(p.shape(), g.shape()));
            }
            self.step_slice(slot, p.data_mut(), g.data(), lr);
        }
        Ok(())
    }
}

/// Classical momentum: `v ← μ·v + g`, `x ← x − η·v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    pub mu: f64,
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(mu: f64, dim: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(Error::InvalidArgument(format!(
                "momentum coefficient must lie in [0, 1), got {mu}"
            )));
        }
        Ok(Self {
            mu,
            velocity: vec![0.0; dim],
        })
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn reset(&mut self) {
        self.velocity.fill(0.0);
    }

    /// Folds `grad` into the velocity and returns the new velocity.
    pub fn advance(&mut self, grad: &[f64]) -> &[f64] {
        assert_eq!(grad.len(), self.velocity.len(), "gradient length");
        for (v, g) in self.velocity.iter_mut().zip(grad) {
            *v = self.mu * *v + g;
        }
        &self.velocity
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {lr}"
            )));
        }
        if x.len() != grad.len() || x.len() != self.velocity.len() {
            return Err(Error::shape(&[self.velocity.len()], &[x.len(), grad.len()]));
        }
        let v = self.advance(grad);
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= lr * vi;
        }
        Ok(())
    }
}
