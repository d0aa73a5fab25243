//! Adam optimizer over flat parameter vectors.

use crate::error::{Error, Result};

/// Bias-corrected Adam state for one parameter group.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    /// Canonical constants: β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(len: usize, lr: f64) -> Self {
        Self::with_hyper(len, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1,
            beta2,
            eps,
            lr,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update in place; increments the step counter.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam over {} parameters got params {} and grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate {} not > 0", self.lr)));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// One update of `state` applied to `params` with `grads`.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    state.step(params, grads)
}
