use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::funcapprox::{fit_selected, Optimizer, OptimizerConfig, Sample, TargetCopy, ValueFunction};
use crate::gridworld::Observation;
use crate::replay::Transition;
use crate::util::{argmax, max_value};

/// Which stored intrinsic quantity a critic learns from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticSignal {
    /// Normalized prediction error.
    PredictionError,
    /// Tabular count bonus.
    CountBonus,
}

/// Action values of intrinsic reward alone; its greedy policy is the
/// prediction-error maximizing intra-policy (or the count-maximizing one).
#[derive(Debug, Clone)]
pub struct PemCritic {
    q: ValueFunction,
    q_target: TargetCopy,
    gamma: f64,
    optimizer: Optimizer,
    signal: CriticSignal,
}

impl PemCritic {
    pub fn new(q: ValueFunction, gamma: f64, optimizer: OptimizerConfig, signal: CriticSignal) -> Self {
        PemCritic {
            q_target: TargetCopy::new(&q),
            q,
            gamma,
            optimizer: optimizer.build(),
            signal,
        }
    }

    pub fn q(&self) -> &ValueFunction {
        &self.q
    }

    pub fn q_mut(&mut self) -> &mut ValueFunction {
        &mut self.q
    }

    pub fn signal(&self) -> CriticSignal {
        self.signal
    }

    fn reward(&self, t: &Transition) -> f64 {
        match self.signal {
            CriticSignal::PredictionError => t.intrinsic,
            CriticSignal::CountBonus => t.count_bonus,
        }
    }

    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        let r = self.reward(t);
        if t.done {
            return Ok(r);
        }
        Ok(r + self.gamma * max_value(&self.q_target.forward(&t.next_obs)?))
    }

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
        let loss = fit_selected(&mut self.q, &mut self.optimizer, &samples, "pem")?;
        self.q_target.tick();
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.q_target.sync(&self.q);
    }

    /// Greedy action over intrinsic values, lowest index among ties.
    pub fn act(&self, obs: &Observation) -> Result<usize> {
        Ok(argmax(&self.q.forward(obs)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::Table;
    use crate::replay::tests::{obs, transition};

    fn critic(gamma: f64) -> PemCritic {
        PemCritic::new(
            ValueFunction::Tabular(Table::new(8, 3, 0.0)),
            gamma,
            OptimizerConfig::Sgd { lr: 0.5 },
            CriticSignal::PredictionError,
        )
    }

    #[test]
    fn terminal_target_is_intrinsic_reward() {
        let c = critic(0.9);
        let mut t = transition(0);
        t.intrinsic = 0.3;
        t.extrinsic = 100.0;
        t.done = true;
        assert_eq!(c.td_target(&t).unwrap(), 0.3);
    }

    #[test]
    fn bootstrapped_target() {
        let mut c = critic(0.9);
        if let ValueFunction::Tabular(tab) = c.q_mut() {
            tab.row_mut(1).copy_from_slice(&[2.0, 1.0, 0.0]);
        }
        c.sync_target();
        let mut t = transition(0);
        t.intrinsic = 1.0;
        assert!((c.td_target(&t).unwrap() - 2.8).abs() < 1e-12);
    }

    #[test]
    fn zero_intrinsic_stream_keeps_zero() {
        let mut c = critic(0.9);
        for i in 0..20 {
            let mut t = transition(i % 7);
            t.extrinsic = 5.0;
            c.update(&[t]).unwrap();
        }
        assert!(c.q().params().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn extrinsic_reward_has_no_effect() {
        let stream = |extrinsic: f64| {
            let mut c = critic(0.9);
            for i in 0..50 {
                let mut t = transition(i % 6);
                t.action = i % 3;
                t.intrinsic = (i as f64 * 0.37).sin();
                t.extrinsic = extrinsic * i as f64;
                t.done = i % 5 == 0;
                c.update(&[t]).unwrap();
                if i % 10 == 0 {
                    c.sync_target();
                }
            }
            c.q().clone()
        };
        assert_eq!(stream(0.0), stream(13.0));
    }

    #[test]
    fn count_signal_reads_count_bonus() {
        let c = PemCritic::new(
            ValueFunction::Tabular(Table::new(4, 2, 0.0)),
            0.9,
            OptimizerConfig::Sgd { lr: 1.0 },
            CriticSignal::CountBonus,
        );
        let mut t = transition(0);
        t.intrinsic = 3.0;
        t.count_bonus = 0.5;
        t.done = true;
        assert_eq!(c.td_target(&t).unwrap(), 0.5);
        assert_eq!(c.act(&obs(0)).unwrap(), 0);
    }
}
