//! First-order update rules shared by trajectory generation and forecaster
//! training.
//!
//! The Adam state keeps one pair of moment buffers per parameter vector and
//! applies bias correction on every step. AdamW applies decoupled weight
//! decay: the decay term is added to the update after the adaptive part is
//! formed, and is not fed through the moment estimates.

use crate::error::{Error, Result};

/// Hyperparameters for the adaptive-moment update rules.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    /// Exponential decay for the first-moment estimate.
    pub beta1: f64,
    /// Exponential decay for the second-moment estimate.
    pub beta2: f64,
    /// Denominator stabilizer.
    pub eps: f64,
    /// Decoupled weight-decay coefficient (only used by AdamW).
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamParams {
    /// Check the documented domains: betas in [0, 1), eps > 0, decay >= 0.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !self.beta1.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "beta1 must lie in [0, 1), got {}",
                self.beta1
            )));
        }
        if !(0.0..1.0).contains(&self.beta2) || !self.beta2.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "beta2 must lie in [0, 1), got {}",
                self.beta2
            )));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Moment buffers for one parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    params: AdamParams,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    /// When true, apply decoupled weight decay (AdamW); otherwise plain Adam.
    decoupled_decay: bool,
}

impl AdamState {
    /// Fresh state for a parameter vector of length `len`.
    pub fn new(len: usize, params: AdamParams, decoupled_decay: bool) -> Self {
        AdamState {
            params,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            decoupled_decay,
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update in place: `weights -= lr * direction(gradient)`.
    ///
    /// For Adam the direction is `m_hat / (sqrt(v_hat) + eps)`; AdamW adds
    /// `weight_decay * w` to the direction after the adaptive part.
    pub fn step(&mut self, weights: &mut [f64], gradient: &[f64], lr: f64) -> Result<()> {
        if weights.len() != gradient.len() || weights.len() != self.first_moment.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam step: weights len {}, gradient len {}, state len {}",
                weights.len(),
                gradient.len(),
                self.first_moment.len()
            )));
        }
        self.step_count += 1;
        let AdamParams {
            beta1, beta2, eps, ..
        } = self.params;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for i in 0..weights.len() {
            let g = gradient[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bias1;
            let v_hat = v / bias2;
            let mut direction = m_hat / (v_hat.sqrt() + eps);
            if self.decoupled_decay {
                direction += self.params.weight_decay * weights[i];
            }
            weights[i] -= lr * direction;
        }
        Ok(())
    }
}
