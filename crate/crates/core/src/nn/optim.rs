use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{DenseLayer, LayerGrads};
use crate::{Error, Result, Scalar};

/// Mini-batch SGD with classical momentum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f32,
    pub momentum: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Parameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }
}

/// One momentum update: `v ← momentum·v − lr·g`, `p ← p + v`.
pub fn sgd_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    config: &SgdConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Dimension(format!(
            "{} parameters, {} gradients, {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    let lr = T::lit(config.learning_rate as f64);
    let mu = T::lit(config.momentum as f64);
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = mu * *v - lr * g;
        *p = *p + *v;
    }
    Ok(())
}

/// Velocity buffers for one dense layer.
#[derive(Clone, Debug)]
pub struct LayerMomentum<T = f32> {
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> LayerMomentum<T> {
    pub fn new(layer: &DenseLayer<T>) -> Self {
        Self {
            weights: vec![T::zero(); layer.weights.as_slice().len()],
            bias: vec![T::zero(); layer.bias.len()],
        }
    }

    pub fn step(
        &mut self,
        layer: &mut DenseLayer<T>,
        grads: &LayerGrads<T>,
        config: &SgdConfig,
    ) -> Result<()> {
        sgd_step(
            layer.weights.as_mut_slice(),
            grads.weights.as_slice(),
            &mut self.weights,
            config,
        )?;
        sgd_step(&mut layer.bias, &grads.bias, &mut self.bias, config)
    }
}
