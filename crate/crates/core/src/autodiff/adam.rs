use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moments: Vec<f64>,
    pub second_moments: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_hyperparameters(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            first_moments: vec![0.0; len],
            second_moments: vec![0.0; len],
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moments.is_empty()
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moments.iter_mut())
        .zip(state.second_moments.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
