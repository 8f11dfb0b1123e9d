use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer moments and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub adam: AdamParams,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        Self {
            kind,
            adam: AdamParams::default(),
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::invalid("optimizer, parameters and gradients differ in length"));
        }
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => adam_step(params, grads, &mut self.m, &mut self.v, self.step, lr, self.adam),
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("parameter became non-finite after update".into()));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64, hp: AdamParams) {
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + hp.eps);
    }
}

/// Relative slack so that a row already rescaled to `c` (up to rounding)
/// is not rescaled again; keeps the projection idempotent.
const MAX_NORM_SLACK: f64 = 1e-12;

/// Rescale each row of `rows x cols` weights at `offset` to L2 norm <= c.
pub fn apply_max_norm(params: &mut [f64], offset: usize, rows: usize, cols: usize, c: f64) {
    for r in 0..rows {
        let row = &mut params[offset + r * cols..offset + (r + 1) * cols];
        let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
        if norm > c * (1.0 + MAX_NORM_SLACK) {
            let s = c / norm;
            for w in row {
                *w *= s;
            }
        }
    }
}

/// Max-norm on the incoming weights of each hidden unit of the fusion layer.
pub fn apply_head_max_norm(net: &Network, params: &mut [f64]) {
    let fc = net.fc1;
    apply_max_norm(params, fc.w_off, fc.output, fc.input, net.cfg.maxnorm_c);
}
