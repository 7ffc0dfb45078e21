//! AdamW with decoupled weight decay.

use alloc::vec::Vec;

use crate::model::ModelParameters;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates, flattened in tensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamWState {
    pub fn new(params: &ModelParameters) -> Self {
        let n = params.num_scalars();
        AdamWState {
            step: 0,
            first: alloc::vec![0.0; n],
            second: alloc::vec![0.0; n],
        }
    }
}

/// One bias-corrected AdamW update. Tensors flagged without decay (the
/// fusion coefficients) skip the decoupled shrinkage.
pub fn adamw_step(params: &mut ModelParameters, grads: &ModelParameters, state: &mut AdamWState, config: &AdamWConfig) {
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - libm::pow(config.beta1, f64::from(t));
    let bias2 = 1.0 - libm::pow(config.beta2, f64::from(t));
    let lr = config.learning_rate;
    let grad_views = grads.tensors();
    let mut offset = 0;
    for (view, gview) in params.tensors_mut().into_iter().zip(grad_views) {
        debug_assert_eq!(view.data.len(), gview.data.len());
        let shrink = if view.decay { 1.0 - lr * config.weight_decay } else { 1.0 };
        for (p, &g) in view.data.iter_mut().zip(gview.data) {
            let m = &mut state.first[offset];
            let v = &mut state.second[offset];
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p = *p * shrink - lr * m_hat / (libm::sqrt(v_hat) + config.epsilon);
            offset += 1;
        }
    }
}
