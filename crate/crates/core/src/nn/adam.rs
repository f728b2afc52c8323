use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

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
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }
}

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    first_moment: Array1<f64>,
    second_moment: Array1<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            first_moment: Array1::zeros(num_params),
            second_moment: Array1::zeros(num_params),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. A non-finite gradient, or an update that
    /// would produce non-finite parameters, is rejected and leaves both the
    /// parameters and the optimizer state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::shape("adam parameters", self.first_moment.len(), params.len()));
        }
        if grads.len() != params.len() {
            return Err(Error::shape("adam gradients", params.len(), grads.len()));
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::Numerical("non-finite gradient rejected".into()));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step + 1;
        let bias1 = 1.0 - beta1.powi(t as i32);
        let bias2 = 1.0 - beta2.powi(t as i32);

        let mut new_m = self.first_moment.clone();
        let mut new_v = self.second_moment.clone();
        let mut new_p = params.to_vec();
        for i in 0..params.len() {
            let g = grads[i];
            new_m[i] = beta1 * new_m[i] + (1.0 - beta1) * g;
            new_v[i] = beta2 * new_v[i] + (1.0 - beta2) * g * g;
            let m_hat = new_m[i] / bias1;
            let v_hat = new_v[i] / bias2;
            new_p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        if !new_p.iter().all(|p| p.is_finite()) {
            return Err(Error::Numerical("update produced non-finite parameters".into()));
        }
        params.copy_from_slice(&new_p);
        self.first_moment = new_m;
        self.second_moment = new_v;
        self.step = t;
        Ok(())
    }
}
