use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Seq2SeqModel;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl RmspropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// `acc ← ρ·acc + (1−ρ)·g²; θ ← θ − lr·g / (√acc + ε)`, elementwise.
pub fn rmsprop_update<T: Scalar>(acc: &mut [T], params: &mut [T], grads: &[T], cfg: &RmspropConfig) {
    let lr = T::from_f64(cfg.learning_rate);
    let rho = T::from_f64(cfg.rho);
    let keep = T::from_f64(1.0 - cfg.rho);
    let eps = T::from_f64(cfg.epsilon);
    for ((a, p), &g) in acc.iter_mut().zip(params.iter_mut()).zip(grads) {
        *a = rho * *a + keep * g * g;
        *p -= lr * g / (a.sqrt() + eps);
    }
}

/// Squared-gradient moving averages, one buffer per registered parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState<T> {
    pub config: RmspropConfig,
    accumulators: Vec<Vec<T>>,
}

impl<T: Scalar> RmspropState<T> {
    pub fn new(model: &Seq2SeqModel<T>, config: RmspropConfig) -> Self {
        Self {
            config,
            accumulators: model.params().iter().map(|p| vec![T::zero(); p.data.len()]).collect(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<T>] {
        &self.accumulators
    }

    /// Applies one update. A non-finite gradient aborts before any parameter
    /// changes.
    pub fn step(&mut self, model: &mut Seq2SeqModel<T>, grads: &Seq2SeqModel<T>) -> Result<()> {
        let grads = grads.params();
        if let Some(bad) = grads.iter().find(|g| g.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("gradient of {}", bad.name)));
        }
        for ((param, grad), acc) in model.params_mut().into_iter().zip(&grads).zip(&mut self.accumulators) {
            rmsprop_update(acc, param.data, grad.data, &self.config);
        }
        Ok(())
    }
}
