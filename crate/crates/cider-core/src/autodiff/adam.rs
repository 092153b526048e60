//! Adam with decoupled-from-nothing, classic L2 weight decay: the decay term
//! is added to the raw gradient before the moment updates.

use crate::autodiff::mat::Mat;
use crate::error::{CiderError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            weight_decay: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state. Moment buffers are keyed by parameter position, so every
/// `step` call must pass the same parameters in the same order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    moments: Vec<(Mat, Mat)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over `(parameter, gradient)` pairs, in place.
    pub fn step(&mut self, params: &mut [(&mut Mat, &Mat)]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|(p, _)| (Mat::zeros(p.rows, p.cols), Mat::zeros(p.rows, p.cols)))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(CiderError::contract(format!(
                "optimizer holds {} moment buffers but got {} parameters",
                self.moments.len(),
                params.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);

        for (k, (param, grad)) in params.iter_mut().enumerate() {
            if !param.same_shape(grad) {
                return Err(CiderError::dim(
                    "adam_step",
                    format!(
                        "parameter {k}: {}x{} vs gradient {}x{}",
                        param.rows, param.cols, grad.rows, grad.cols
                    ),
                ));
            }
            let (m, v) = &mut self.moments[k];
            if !param.same_shape(m) {
                return Err(CiderError::contract(format!(
                    "parameter {k} changed shape between optimizer steps"
                )));
            }
            for i in 0..param.data.len() {
                let g = grad.data[i] + c.weight_decay * param.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * g;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                param.data[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
            if !param.all_finite() {
                return Err(CiderError::Numeric {
                    op: "adam_step".to_string(),
                });
            }
        }
        Ok(())
    }
}
