use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RMSPROP_DECAY: f64 = 0.99;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    RmsProp { lr: f64 },
    Adam { lr: f64 },
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr }
            | OptimizerConfig::RmsProp { lr }
            | OptimizerConfig::Adam { lr } => lr,
        }
    }

    pub fn build(self) -> Optimizer {
        Optimizer::new(self)
    }
}

/// First-order optimizer over a flat parameter vector. Accumulators are sized
/// on the first step and must keep that size.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer {
            config,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Descends along `grads`. Rejects non-finite gradients before touching
    /// any parameter.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                actual: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        for acc in [&self.first, &self.second] {
            if !acc.is_empty() && acc.len() != params.len() {
                return Err(Error::DimensionMismatch {
                    expected: acc.len(),
                    actual: params.len(),
                });
            }
        }
        self.steps += 1;
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerConfig::RmsProp { lr } => {
                self.second.resize(params.len(), 0.0);
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.second) {
                    *v = RMSPROP_DECAY * *v + (1.0 - RMSPROP_DECAY) * g * g;
                    *p -= lr * g / (v.sqrt() + EPS);
                }
            }
            OptimizerConfig::Adam { lr } => {
                self.first.resize(params.len(), 0.0);
                self.second.resize(params.len(), 0.0);
                let t = self.steps as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                }
            }
        }
        Ok(())
    }
}
