//! Age + PSA logistic regression baseline on the one-hot covariates.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::sigmoid;

pub const MAX_ITERATIONS: usize = 10_000;
pub const GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Intercept followed by one coefficient per covariate.
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(linear(&self.coef, x))
    }
}

fn linear(theta: &[f64], x: &[f64]) -> f64 {
    theta[0] + theta[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

/// Mean negative log-likelihood and its gradient.
pub fn logistic_loss_and_grad(theta: &[f64], xs: &[Vec<f64>], ys: &[u8]) -> (f64, Vec<f64>) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut g = vec![0.0; theta.len()];
    for (x, &y) in xs.iter().zip(ys) {
        let z = linear(theta, x);
        // log(1 + e^z) computed stably
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        loss += softplus - y as f64 * z;
        let r = sigmoid(z) - y as f64;
        g[0] += r;
        for (gj, xj) in g[1..].iter_mut().zip(x) {
            *gj += r * xj;
        }
    }
    for v in &mut g {
        *v /= n;
    }
    (loss / n, g)
}

/// Full-batch gradient descent with step halving until the mean loss
/// decreases; stops when the gradient norm drops below 1e-8 or after
/// 10,000 iterations.
pub fn fit_logistic_baseline(xs: &[Vec<f64>], ys: &[u8]) -> Result<LogisticModel> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::invalid("covariates and labels differ in length or are empty"));
    }
    let pos = ys.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == ys.len() {
        return Err(Error::UndefinedMetric("logistic baseline needs both classes".into()));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(Error::invalid("covariate rows differ in length"));
    }
    let mut theta = vec![0.0; dim + 1];
    let (mut loss, mut g) = logistic_loss_and_grad(&theta, xs, ys);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        if norm(&g) < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, d)| t - step * d).collect();
            let (cl, cg) = logistic_loss_and_grad(&cand, xs, ys);
            if cl < loss {
                theta = cand;
                loss = cl;
                g = cg;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable decrease left: at the optimum up to rounding.
            converged = norm(&g) < 1e-6;
            break;
        }
        step *= 2.0;
    }
    if !converged {
        warn!("logistic baseline stopped after {iterations} iterations without converging (separable data?)");
    }
    Ok(LogisticModel {
        coef: theta,
        iterations,
        converged,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
