//! Action-value stores: tables and small fully-connected networks with
//! hand-written backpropagation, plus their optimizers.

mod mlp;
mod optim;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use mlp::{Activation, LayerShape, Mlp};
pub use optim::{Optimizer, OptimizerConfig};

use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::util::Rng;

/// Dense `states × outputs` table indexed by the observation's state index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    states: usize,
    outputs: usize,
    values: Vec<f64>,
}

impl Table {
    pub fn new(states: usize, outputs: usize, init: f64) -> Self {
        Table {
            states,
            outputs,
            values: vec![init; states * outputs],
        }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.outputs..(state + 1) * self.outputs]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        &mut self.values[state * self.outputs..(state + 1) * self.outputs]
    }

    pub fn states(&self) -> usize {
        self.states
    }
}

/// Either a lookup table or a network; both expose the same flat parameter
/// vector so optimizers and target copies treat them alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ValueFunction {
    Tabular(Table),
    Network(Mlp),
}

/// How a learner represents its value function.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Approximator {
    #[default]
    Tabular,
    Network { hidden: Vec<usize> },
}

/// Hidden widths used for every value network (two layers of 64).
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

impl Approximator {
    pub fn network() -> Self {
        Approximator::Network {
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }

    pub fn build(&self, states: usize, features: usize, outputs: usize, rng: &mut Rng) -> ValueFunction {
        match self {
            Approximator::Tabular => ValueFunction::Tabular(Table::new(states, outputs, 0.0)),
            Approximator::Network { hidden } => {
                ValueFunction::Network(Mlp::new(features, hidden, outputs, rng))
            }
        }
    }
}

impl ValueFunction {
    pub fn output_len(&self) -> usize {
        match self {
            ValueFunction::Tabular(t) => t.outputs,
            ValueFunction::Network(n) => n.output_len(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            ValueFunction::Tabular(t) => &t.values,
            ValueFunction::Network(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            ValueFunction::Tabular(t) => &mut t.values,
            ValueFunction::Network(n) => n.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    pub fn forward(&self, obs: &Observation) -> Result<Vec<f64>> {
        match self {
            ValueFunction::Tabular(t) => {
                if obs.index >= t.states {
                    return Err(Error::DimensionMismatch {
                        expected: t.states,
                        actual: obs.index + 1,
                    });
                }
                Ok(t.row(obs.index).to_vec())
            }
            ValueFunction::Network(n) => n.forward(&obs.features),
        }
    }

    /// Adds the gradient of `output · out_grad` into `grads`.
    pub fn accumulate_grad(&self, obs: &Observation, out_grad: &[f64], grads: &mut [f64]) -> Result<()> {
        match self {
            ValueFunction::Tabular(t) => {
                if out_grad.len() != t.outputs {
                    return Err(Error::DimensionMismatch {
                        expected: t.outputs,
                        actual: out_grad.len(),
                    });
                }
                let start = obs.index * t.outputs;
                for (g, d) in grads[start..start + t.outputs].iter_mut().zip(out_grad) {
                    *g += d;
                }
                Ok(())
            }
            ValueFunction::Network(n) => n.accumulate_grad(&obs.features, out_grad, grads),
        }
    }

    /// Parameter gradient of `output · out_grad` at `obs`.
    pub fn backward(&self, obs: &Observation, out_grad: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.param_count()];
        self.accumulate_grad(obs, out_grad, &mut grads)?;
        Ok(grads)
    }

    pub fn apply_update(&mut self, opt: &mut Optimizer, grads: &[f64]) -> Result<()> {
        opt.step(self.params_mut(), grads)
    }

    pub fn param_norm(&self) -> f64 {
        self.params().iter().map(|p| p * p).sum::<f64>().sqrt()
    }

    /// Writes a JSON checkpoint carrying the shapes alongside the values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vf: ValueFunction = serde_json::from_str(&text)?;
        match &vf {
            ValueFunction::Tabular(t) if t.values.len() != t.states * t.outputs => {
                return Err(Error::Checkpoint(format!(
                    "table {}x{} has {} values",
                    t.states,
                    t.outputs,
                    t.values.len()
                )))
            }
            ValueFunction::Network(n) => {
                Mlp::from_parts(n.layers().to_vec(), n.params().to_vec())
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
            }
            _ => {}
        }
        Ok(vf)
    }
}

/// Regression sample: move output `output` at `obs` toward `target`.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub obs: &'a Observation,
    pub output: usize,
    pub target: f64,
}

/// One optimizer step on `mean((target - f(obs)[output])^2)` over `samples`.
///
/// Returns the loss measured before the step. The gradient applied is that
/// of half the mean squared error, so a tabular SGD step with `lr = 1` on a
/// single sample lands exactly on its target. Only the selected output of
/// each sample receives gradient.
pub fn fit_selected(
    vf: &mut ValueFunction,
    opt: &mut Optimizer,
    samples: &[Sample<'_>],
    learner: &'static str,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = samples.len() as f64;
    let mut grads = vec![0.0; vf.param_count()];
    let mut out_grad = vec![0.0; vf.output_len()];
    let mut loss = 0.0;
    for s in samples {
        let pred = vf.forward(s.obs)?[s.output];
        let err = pred - s.target;
        loss += err * err;
        out_grad.fill(0.0);
        out_grad[s.output] = err / n;
        vf.accumulate_grad(s.obs, &out_grad, &mut grads)?;
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            learner,
            update: opt.steps(),
        });
    }
    vf.apply_update(opt, &grads)?;
    Ok(loss)
}

/// Frozen snapshot of a value function used for bootstrapped targets.
#[derive(Debug, Clone)]
pub struct TargetCopy {
    snapshot: ValueFunction,
    staleness: u64,
}

impl TargetCopy {
    pub fn new(source: &ValueFunction) -> Self {
        TargetCopy {
            snapshot: source.clone(),
            staleness: 0,
        }
    }

    pub fn sync(&mut self, source: &ValueFunction) {
        self.snapshot.params_mut().copy_from_slice(source.params());
        self.staleness = 0;
    }

    pub fn tick(&mut self) {
        self.staleness += 1;
    }

    pub fn staleness(&self) -> u64 {
        self.staleness
    }

    pub fn forward(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.snapshot.forward(obs)
    }

    pub fn value_function(&self) -> &ValueFunction {
        &self.snapshot
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;
    use std::sync::Arc;

    fn obs(index: usize, n: usize) -> Observation {
        let mut f = vec![0.0; n];
        f[index] = 1.0;
        Observation {
            index,
            features: Arc::from(f),
        }
    }

    #[test]
    fn fresh_table_is_zero() {
        let vf = Approximator::Tabular.build(10, 10, 5, &mut seeded_rng(0));
        assert_eq!(vf.forward(&obs(3, 10)).unwrap(), vec![0.0; 5]);
        assert!(vf.forward(&obs(3, 10).clone_with_index(10)).is_err());
    }

    impl Observation {
        fn clone_with_index(&self, index: usize) -> Observation {
            Observation {
                index,
                features: self.features.clone(),
            }
        }
    }

    #[test]
    fn target_copy_tracks_sync() {
        let mut vf = Approximator::network().build(4, 4, 2, &mut seeded_rng(1));
        let mut target = TargetCopy::new(&vf);
        let o = obs(1, 4);
        assert_eq!(target.forward(&o).unwrap(), vf.forward(&o).unwrap());
        let g = vf.backward(&o, &[1.0, -1.0]).unwrap();
        vf.apply_update(&mut OptimizerConfig::Sgd { lr: 0.1 }.build(), &g).unwrap();
        target.tick();
        assert_ne!(target.forward(&o).unwrap(), vf.forward(&o).unwrap());
        target.sync(&vf);
        assert_eq!(target.staleness(), 0);
        assert_eq!(target.value_function(), &vf);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for vf in [
            Approximator::network().build(6, 6, 3, &mut seeded_rng(2)),
            Approximator::Tabular.build(6, 6, 3, &mut seeded_rng(2)),
        ] {
            let path = dir.path().join("ckpt.json");
            vf.save(&path).unwrap();
            assert_eq!(ValueFunction::load(&path).unwrap(), vf);
        }
    }

    #[test]
    fn corrupt_checkpoint_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"mode":"tabular","states":2,"outputs":2,"values":[0.0]}"#)
            .unwrap();
        assert!(matches!(ValueFunction::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn shapes_survive_updates() {
        let mut vf = Approximator::network().build(5, 5, 3, &mut seeded_rng(3));
        let n = vf.param_count();
        let mut opt = OptimizerConfig::Adam { lr: 1e-3 }.build();
        for i in 0..5 {
            let g = vf.backward(&obs(i, 5), &[1.0, 0.0, -1.0]).unwrap();
            vf.apply_update(&mut opt, &g).unwrap();
        }
        assert_eq!(vf.param_count(), n);
    }
}
