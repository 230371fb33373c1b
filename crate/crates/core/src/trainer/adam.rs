use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr0: 1e-3,
            decay_rate: 0.5,
            decay_every: 3000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 8000,
        }
    }
}

impl AdamConfig {
    pub fn validated(self) -> Result<Self> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("adam lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::Config(format!("adam decay_rate must lie in (0, 1], got {}", self.decay_rate)));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("adam decay_every must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("adam moment coefficients must lie in [0, 1) and eps > 0".into()));
        }
        Ok(self)
    }

    /// lr0 · decay_rate^⌊iter / decay_every⌋
    pub fn learning_rate(&self, iter: usize) -> f64 {
        self.lr0 * self.decay_rate.powi((iter / self.decay_every) as i32)
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], steps: 0 }
    }

    /// One bias-corrected Adam update of `params`; `iter` drives the schedule.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], iter: usize, cfg: &AdamConfig) -> Result<()> {
        if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { iter, term: format!("gradient component {k}") });
        }
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.steps += 1;
        let lr = cfg.learning_rate(iter);
        let bc1 = 1.0 - cfg.beta1.powi(self.steps);
        let bc2 = 1.0 - cfg.beta2.powi(self.steps);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g;
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[k] / bc1;
            let vhat = self.v[k] / bc2;
            params[k] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], iter: usize, cfg: &AdamConfig) -> Result<()> {
    state.step(params, grad, iter, cfg)
}
