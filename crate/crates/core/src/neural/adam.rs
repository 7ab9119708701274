use serde::{Deserialize, Serialize};

use super::{Gradients, NetworkState, NeuralError};

/// Adam moments plus hyperparameters. Moments are flat, in
/// [`NetworkState::slices`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub hyper: AdamConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl OptimizerState {
    pub fn new(state: &NetworkState, hyper: AdamConfig) -> Self {
        let n = state.parameter_count();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(opt: &mut OptimizerState, state: &mut NetworkState, grads: &Gradients) -> Result<(), NeuralError> {
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = opt.hyper;
    let grad_slices = grads.slices();
    let mut params = state.slices_mut();
    let total: usize = params.iter().map(|p| p.len()).sum();
    let grad_total: usize = grad_slices.iter().map(|g| g.len()).sum();
    if total != opt.m.len() || grad_total != total || params.len() != grad_slices.len() {
        return Err(NeuralError::ShapeMismatch("optimizer, weights and gradients disagree".into()));
    }
    opt.t += 1;
    let t = opt.t as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    let mut k = 0;
    for (theta, g) in params.iter_mut().zip(grad_slices) {
        for (p, &gi) in theta.iter_mut().zip(g) {
            let m = beta1 * opt.m[k] + (1.0 - beta1) * gi;
            let v = beta2 * opt.v[k] + (1.0 - beta2) * gi * gi;
            opt.m[k] = m;
            opt.v[k] = v;
            *p -= learning_rate * (m / correction1) / ((v / correction2).sqrt() + epsilon);
            k += 1;
        }
    }
    Ok(())
}
