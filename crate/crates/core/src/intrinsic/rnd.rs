use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::funcapprox::{Mlp, Optimizer, OptimizerConfig};
use crate::gridworld::Observation;
use crate::util::Rng;

/// A frozen random network and a trainable predictor of its output.
#[derive(Debug, Clone)]
pub struct RndPair {
    fixed: Mlp,
    predictor: Mlp,
    optimizer: Optimizer,
}

impl RndPair {
    /// Fixed net: one hidden layer; predictor: two, so it cannot start out
    /// identical to the fixed net.
    pub fn new(inputs: usize, hidden: usize, embed_dim: usize, opt: OptimizerConfig, rng: &mut Rng) -> Self {
        let fixed = Mlp::new(inputs, &[hidden], embed_dim, rng);
        let predictor = Mlp::new(inputs, &[hidden, hidden], embed_dim, rng);
        RndPair {
            fixed,
            predictor,
            optimizer: opt.build(),
        }
    }

    pub fn from_nets(fixed: Mlp, predictor: Mlp, opt: OptimizerConfig) -> Result<Self> {
        if fixed.input_len() != predictor.input_len() || fixed.output_len() != predictor.output_len() {
            return Err(Error::DimensionMismatch {
                expected: fixed.output_len(),
                actual: predictor.output_len(),
            });
        }
        Ok(RndPair {
            fixed,
            predictor,
            optimizer: opt.build(),
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.fixed.output_len()
    }

    pub fn fixed(&self) -> &Mlp {
        &self.fixed
    }

    pub fn predictor(&self) -> &Mlp {
        &self.predictor
    }

    /// Squared distance between predictor and fixed outputs.
    pub fn raw_error(&self, obs: &Observation) -> Result<f64> {
        let f = self.fixed.forward(&obs.features)?;
        let p = self.predictor.forward(&obs.features)?;
        Ok(f.iter().zip(&p).map(|(a, b)| (b - a) * (b - a)).sum())
    }

    /// One optimizer step on the mean raw error over `batch`; returns the
    /// pre-step loss. The fixed network is never touched.
    pub fn update_predictor(&mut self, batch: &[&Observation]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.predictor.params().len()];
        let mut loss = 0.0;
        for obs in batch {
            let f = self.fixed.forward(&obs.features)?;
            let p = self.predictor.forward(&obs.features)?;
            let out_grad: Vec<f64> = p.iter().zip(&f).map(|(p, f)| 2.0 * (p - f) / n).collect();
            loss += p.iter().zip(&f).map(|(p, f)| (p - f) * (p - f)).sum::<f64>();
            self.predictor.accumulate_grad(&obs.features, &out_grad, &mut grads)?;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                learner: "rnd",
                update: self.optimizer.steps(),
            });
        }
        self.optimizer.step(self.predictor.params_mut(), &grads)?;
        Ok(loss)
    }

    /// Hash of the fixed network's parameter bits.
    pub fn fixed_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for p in self.fixed.params() {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }
}
