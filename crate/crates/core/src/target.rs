//! Greedy target policy trained by one-step Q-learning on extrinsic reward.

use crate::error::Result;
use crate::funcapprox::{fit_selected, Optimizer, OptimizerConfig, Sample, TargetCopy, ValueFunction};
use crate::gridworld::Observation;
use crate::replay::Transition;
use crate::util::{argmax, max_value};

#[derive(Debug, Clone)]
pub struct TargetLearner {
    q: ValueFunction,
    q_target: TargetCopy,
    gamma: f64,
    optimizer: Optimizer,
    /// Weight on the stored intrinsic reward. Zero for the target policy
    /// proper; the RND baseline trains its single Q on the mixed reward.
    intrinsic_weight: f64,
}

impl TargetLearner {
    pub fn new(q: ValueFunction, gamma: f64, optimizer: OptimizerConfig) -> Self {
        assert!((0.0..1.0).contains(&gamma), "gamma must lie in [0, 1)");
        TargetLearner {
            q_target: TargetCopy::new(&q),
            q,
            gamma,
            optimizer: optimizer.build(),
            intrinsic_weight: 0.0,
        }
    }

    pub fn with_intrinsic_weight(mut self, weight: f64) -> Self {
        self.intrinsic_weight = weight;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn q(&self) -> &ValueFunction {
        &self.q
    }

    pub fn q_mut(&mut self) -> &mut ValueFunction {
        &mut self.q
    }

    pub fn target_copy(&self) -> &TargetCopy {
        &self.q_target
    }

    pub fn reward(&self, t: &Transition) -> f64 {
        if self.intrinsic_weight == 0.0 {
            t.extrinsic
        } else {
            t.extrinsic + self.intrinsic_weight * t.intrinsic
        }
    }

    /// `r + γ max_a Q⁻(s', a)`, or just `r` on terminal transitions.
    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        let r = self.reward(t);
        if t.done {
            return Ok(r);
        }
        let next = self.q_target.forward(&t.next_obs)?;
        Ok(r + self.gamma * max_value(&next))
    }

    /// One optimizer step on the batch; returns the pre-step loss.
    pub fn update(&mut self, batch: &[Transition]) -> Result<f64> {
        let targets = batch
            .iter()
            .map(|t| self.td_target(t))
            .collect::<Result<Vec<f64>>>()?;
        let samples: Vec<Sample<'_>> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &y)| Sample {
                obs: &t.obs,
                output: t.action,
                target: y,
            })
            .collect();
        let loss = fit_selected(&mut self.q, &mut self.optimizer, &samples, "target")?;
        self.q_target.tick();
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.q_target.sync(&self.q);
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.q.forward(obs)
    }

    /// Greedy action, lowest index among ties.
    pub fn act_greedy(&self, obs: &Observation) -> Result<usize> {
        Ok(argmax(&self.q.forward(obs)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::{Approximator, Table};
    use crate::replay::tests::{obs, transition};
    use crate::util::seeded_rng;

    fn tabular(states: usize, actions: usize, lr: f64) -> TargetLearner {
        TargetLearner::new(
            ValueFunction::Tabular(Table::new(states, actions, 0.0)),
            0.99,
            OptimizerConfig::Sgd { lr },
        )
    }

    #[test]
    fn terminal_transition_does_not_bootstrap() {
        let mut l = tabular(4, 2, 1.0);
        l.q_mut().params_mut().fill(100.0);
        l.sync_target();
        let mut t = transition(0);
        t.extrinsic = 8.74;
        t.done = true;
        assert_eq!(l.td_target(&t).unwrap(), 8.74);
    }

    #[test]
    fn bootstrap_uses_target_copy_max() {
        let mut l = tabular(4, 3, 1.0);
        if let ValueFunction::Tabular(tab) = l.q_mut() {
            tab.row_mut(1).copy_from_slice(&[2.0, 10.0, -1.0]);
        }
        let mut t = transition(0);
        t.extrinsic = 1.0;
        // Before syncing the copy is all zero.
        assert_eq!(l.td_target(&t).unwrap(), 1.0);
        l.sync_target();
        assert!((l.td_target(&t).unwrap() - 10.9).abs() < 1e-12);
        t.extrinsic = 0.0;
        let zero = tabular(4, 3, 1.0);
        assert_eq!(zero.td_target(&t).unwrap(), 0.0);
    }

    #[test]
    fn intrinsic_is_ignored_by_default() {
        let l = tabular(4, 2, 1.0);
        let mut t = transition(0);
        t.intrinsic = 3.0;
        t.done = true;
        assert_eq!(l.td_target(&t).unwrap(), 0.0);
        let mixed = tabular(4, 2, 1.0).with_intrinsic_weight(0.5);
        assert_eq!(mixed.td_target(&t).unwrap(), 1.5);
    }

    #[test]
    fn converged_batch_has_zero_loss_and_no_change() {
        let mut l = tabular(4, 2, 0.5);
        let mut t = transition(0);
        t.done = true;
        t.extrinsic = 2.0;
        if let ValueFunction::Tabular(tab) = l.q_mut() {
            tab.row_mut(0)[0] = 2.0;
        }
        let before = l.q().clone();
        assert_eq!(l.update(&[t.clone(), t]).unwrap(), 0.0);
        assert_eq!(l.q(), &before);
    }

    #[test]
    fn tabular_unit_step_lands_on_target() {
        let mut l = tabular(4, 2, 1.0);
        let mut t = transition(2);
        t.action = 1;
        t.extrinsic = 3.5;
        t.done = true;
        l.update(&[t]).unwrap();
        assert_eq!(l.q_values(&obs(2)).unwrap(), vec![0.0, 3.5]);
    }

    #[test]
    fn repeated_updates_contract_on_a_point() {
        let mut l = tabular(4, 2, 0.1);
        let mut t = transition(1);
        t.extrinsic = 5.0;
        t.done = true;
        let mut last = f64::INFINITY;
        let mut loss = 0.0;
        for _ in 0..500 {
            loss = l.update(std::slice::from_ref(&t)).unwrap();
            assert!(loss <= last);
            last = loss;
        }
        assert!(loss < 1e-6, "{loss}");
    }

    #[test]
    fn only_taken_action_moves() {
        let mut l = TargetLearner::new(
            Approximator::Tabular.build(3, 3, 4, &mut seeded_rng(0)),
            0.9,
            OptimizerConfig::Sgd { lr: 1.0 },
        );
        let mut t = transition(0);
        t.action = 2;
        t.extrinsic = 1.0;
        t.done = true;
        l.update(&[t]).unwrap();
        assert_eq!(l.q_values(&obs(0)).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn greedy_action_tie_breaks_low_and_is_scale_invariant() {
        let mut l = tabular(2, 3, 1.0);
        assert_eq!(l.act_greedy(&obs(0)).unwrap(), 0);
        if let ValueFunction::Tabular(tab) = l.q_mut() {
            tab.row_mut(0).copy_from_slice(&[1.0, 3.0, 2.0]);
        }
        assert_eq!(l.act_greedy(&obs(0)).unwrap(), 1);
        for p in l.q_mut().params_mut() {
            *p = 2.0 * *p + 7.0;
        }
        assert_eq!(l.act_greedy(&obs(0)).unwrap(), 1);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut l = tabular(4, 2, 1.0);
        let mut t = transition(0);
        t.extrinsic = f64::INFINITY;
        t.done = true;
        assert!(matches!(
            l.update(&[t]),
            Err(crate::error::Error::NonFiniteLoss { learner: "target", .. })
        ));
    }
}
