use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Optimization schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// RMSprop decay `ρ`.
    pub rho: f64,
    /// RMSprop `ε`.
    pub epsilon: f64,
    pub seed: u64,
    pub task: Task,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 10,
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-7,
            seed: 0,
            task: Task::Readmission,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho {} outside (0, 1)", self.rho)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon {} must be non-negative", self.epsilon)));
        }
        Ok(())
    }
}

/// `s ← ρs + (1−ρ)g²; p ← p − lr·g/(√s + ε)` on flat slices.
pub fn rmsprop_update(params: &mut [f64], grads: &[f64], state: &mut [f64], lr: f64, rho: f64, eps: f64) {
    for ((p, &g), s) in params.iter_mut().zip(grads).zip(state.iter_mut()) {
        *s = rho * *s + (1.0 - rho) * g * g;
        if g != 0.0 {
            *p -= lr * g / (s.sqrt() + eps);
        }
    }
}

/// Running mean of squared gradients, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    state: ModelParams,
}

impl RmsProp {
    pub fn new(params: &ModelParams) -> Self {
        RmsProp {
            state: params.zeros_like(),
        }
    }

    pub fn state(&self) -> &ModelParams {
        &self.state
    }

    /// One update; the padding embedding is re-zeroed afterwards.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, config: &TrainConfig) {
        let targets = params.tensors_mut().into_iter().zip(grads.tensors());
        for ((p, g), s) in targets.zip(self.state.tensors_mut()) {
            rmsprop_update(
                p.data_mut(),
                g.data(),
                s.data_mut(),
                config.learning_rate,
                config.rho,
                config.epsilon,
            );
        }
        params.zero_padding_row();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_step_by_hand() {
        let (mut p, mut s) = ([1.0], [0.0]);
        rmsprop_update(&mut p, &[1.0], &mut s, 0.1, 0.9, 0.0);
        assert!((s[0] - 0.1).abs() < 1e-15);
        assert!((p[0] - (1.0 - 0.1 / 0.1f64.sqrt())).abs() < 1e-12);
        assert!((p[0] - 0.6838).abs() < 1e-4);
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_state() {
        let (mut p, mut s) = ([2.5, -1.0], [0.4, 0.0]);
        rmsprop_update(&mut p, &[0.0, 0.0], &mut s, 0.1, 0.9, 0.0);
        assert_eq!(p, [2.5, -1.0]);
        assert!((s[0] - 0.36).abs() < 1e-15);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn quadratic_loss_decreases() {
        let (mut p, mut s) = ([3.0], [0.0]);
        let before = p[0] * p[0];
        let g = [2.0 * p[0]];
        rmsprop_update(&mut p, &g, &mut s, 1e-3, 0.9, 1e-7);
        assert!(p[0] * p[0] < before);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { rho: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: f64::NAN, ..Default::default() }.validate().is_err());
    }
}
