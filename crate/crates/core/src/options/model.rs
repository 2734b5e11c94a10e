use serde::{Deserialize, Serialize};

use super::IntraPolicy;
use crate::error::{Error, Result};
use crate::funcapprox::{
    fit_selected, Approximator, Optimizer, OptimizerConfig, Sample, TargetCopy, ValueFunction,
};
use crate::gridworld::Observation;
use crate::replay::Transition;
use crate::util::{argmax, max_value, sample_categorical, sigmoid, softmax, Rng};

/// Temperatures at or below this select the argmax deterministically.
const ARGMAX_TEMPERATURE: f64 = 1e-6;

/// Reference value the termination gradient compares an option against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationBaseline {
    /// `max_ω' Q_Ω(s', ω')`: the best option never changes its termination.
    Max,
    /// Expected option value under the softmax selection policy. Equals
    /// `Max` as the temperature goes to zero; with a positive temperature
    /// the best option's termination probability is pushed down.
    #[default]
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionModelConfig {
    pub policies: Vec<IntraPolicy>,
    /// Weight of intrinsic reward in the option-value objective.
    pub alpha: f64,
    /// Option selection temperature.
    pub tau: f64,
    pub gamma: f64,
    #[serde(default)]
    pub baseline: TerminationBaseline,
    pub q_optimizer: OptimizerConfig,
    pub termination_optimizer: OptimizerConfig,
}

/// Option values `Q_Ω(s, ω)` with a target copy, and one termination
/// function `β_ω(s) = sigmoid(logit_ω(s))` per option.
#[derive(Debug, Clone)]
pub struct OptionModel {
    policies: Vec<IntraPolicy>,
    q_omega: ValueFunction,
    q_omega_target: TargetCopy,
    terminations: Vec<ValueFunction>,
    alpha: f64,
    tau: f64,
    gamma: f64,
    baseline: TerminationBaseline,
    q_opt: Optimizer,
    term_opts: Vec<Optimizer>,
}

impl OptionModel {
    /// Termination logits start at zero, i.e. `β = 0.5` everywhere.
    pub fn new(
        cfg: &OptionModelConfig,
        approx: &Approximator,
        states: usize,
        features: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if cfg.policies.is_empty() {
            return Err(Error::InvalidConfig("option model needs at least one option".into()));
        }
        if !(0.0..1.0).contains(&cfg.gamma) || !(cfg.tau >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} / tau {} out of range",
                cfg.gamma, cfg.tau
            )));
        }
        let n = cfg.policies.len();
        let q_omega = approx.build(states, features, n, rng);
        let terminations = (0..n)
            .map(|_| {
                let mut vf = approx.build(states, features, 1, rng);
                if let ValueFunction::Network(net) = &mut vf {
                    net.zero_output_layer();
                }
                vf
            })
            .collect();
        Ok(OptionModel {
            policies: cfg.policies.clone(),
            q_omega_target: TargetCopy::new(&q_omega),
            q_omega,
            terminations,
            alpha: cfg.alpha,
            tau: cfg.tau,
            gamma: cfg.gamma,
            baseline: cfg.baseline,
            q_opt: cfg.q_optimizer.build(),
            term_opts: (0..n).map(|_| cfg.termination_optimizer.build()).collect(),
        })
    }

    pub fn option_count(&self) -> usize {
        self.policies.len()
    }

    pub fn policies(&self) -> &[IntraPolicy] {
        &self.policies
    }

    pub fn policy(&self, option: usize) -> IntraPolicy {
        self.policies[option]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_tau(&mut self, tau: f64) {
        self.tau = tau;
    }

    pub fn q_omega(&self) -> &ValueFunction {
        &self.q_omega
    }

    pub fn q_omega_mut(&mut self) -> &mut ValueFunction {
        &mut self.q_omega
    }

    pub fn termination(&self, option: usize) -> &ValueFunction {
        &self.terminations[option]
    }

    pub fn termination_mut(&mut self, option: usize) -> &mut ValueFunction {
        &mut self.terminations[option]
    }

    pub fn option_values(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.q_omega.forward(obs)
    }

    pub fn termination_logit(&self, option: usize, obs: &Observation) -> Result<f64> {
        Ok(self.terminations[option].forward(obs)?[0])
    }

    /// `β_ω(s)`, strictly inside (0, 1) for finite logits.
    pub fn beta(&self, option: usize, obs: &Observation) -> Result<f64> {
        Ok(sigmoid(self.termination_logit(option, obs)?))
    }

    fn selection_probs_of(&self, values: &[f64]) -> Vec<f64> {
        if self.tau <= ARGMAX_TEMPERATURE {
            let mut p = vec![0.0; values.len()];
            p[argmax(values)] = 1.0;
            p
        } else {
            softmax(values, self.tau)
        }
    }

    /// `softmax(Q_Ω(s, ·) / τ)`, or the lowest-index argmax when `τ ≈ 0`.
    pub fn selection_probs(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.selection_probs_of(&self.option_values(obs)?))
    }

    pub fn select_option(&self, obs: &Observation, rng: &mut Rng) -> Result<usize> {
        let values = self.option_values(obs)?;
        if self.tau <= ARGMAX_TEMPERATURE {
            return Ok(argmax(&values));
        }
        Ok(sample_categorical(&softmax(&values, self.tau), rng))
    }

    /// Bernoulli draw of `β_ω(s')`; always true when the episode ended (no
    /// draw is consumed then).
    pub fn should_terminate(
        &self,
        option: usize,
        next_obs: &Observation,
        episode_done: bool,
        rng: &mut Rng,
    ) -> Result<bool> {
        use rand::Rng as _;
        if episode_done {
            return Ok(true);
        }
        let beta = self.beta(option, next_obs)?;
        let u: f64 = rng.gen();
        Ok(u < beta)
    }

    pub fn reward(&self, t: &Transition) -> f64 {
        t.extrinsic + self.alpha * t.intrinsic
    }

    /// `r^e + α r^i + γ[(1-β) Q⁻(s', ω) + β max Q⁻(s', ·)]` with `β` from
    /// the current termination function; the bracket is dropped on terminal
    /// transitions.
    pub fn option_td_target(&self, t: &Transition) -> Result<f64> {
        let r = self.reward(t);
        if t.done {
            return Ok(r);
        }
        let beta = self.beta(t.option, &t.next_obs)?;
        let next = self.q_omega_target.forward(&t.next_obs)?;
        let continue_value = (1.0 - beta) * next[t.option];
        let switch_value = beta * max_value(&next);
        Ok(r + self.gamma * (continue_value + switch_value))
    }

    /// One step on the squared TD error of the stored option.
    pub fn update_q_omega(&mut self, batch: &[Transition]) -> Result<f64> {
        let targets = batch
            .iter()
            .map(|t| self.option_td_target(t))
            .collect::<Result<Vec<f64>>>()?;
        let samples: Vec<Sample<'_>> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &y)| Sample {
                obs: &t.obs,
                output: t.option,
                target: y,
            })
            .collect();
        let loss = fit_selected(&mut self.q_omega, &mut self.q_opt, &samples, "option-value")?;
        self.q_omega_target.tick();
        Ok(loss)
    }

    /// Advantage of `option` at `obs` against the configured baseline,
    /// computed with the online option values.
    pub fn termination_advantage(&self, option: usize, obs: &Observation) -> Result<f64> {
        let q = self.option_values(obs)?;
        let baseline = match self.baseline {
            TerminationBaseline::Max => max_value(&q),
            TerminationBaseline::Soft => {
                let p = self.selection_probs_of(&q);
                p.iter().zip(&q).map(|(p, q)| p * q).sum()
            }
        };
        Ok(q[option] - baseline)
    }

    /// Termination-gradient step: each non-terminal sample pushes
    /// `β_{ω_t}(s_{t+1})` up when `ω_t` is worse than the baseline and down
    /// when it is better. Returns the mean advantage over the used samples.
    pub fn update_terminations(&mut self, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let live: Vec<&Transition> = batch.iter().filter(|t| !t.done).collect();
        if live.is_empty() {
            return Ok(0.0);
        }
        let n = live.len() as f64;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.option_count()];
        let mut mean_adv = 0.0;
        for t in &live {
            let adv = self.termination_advantage(t.option, &t.next_obs)?;
            mean_adv += adv / n;
            let beta = self.beta(t.option, &t.next_obs)?;
            // Descending β·A raises the logit when A < 0.
            let out_grad = [beta * (1.0 - beta) * adv / n];
            let net = &self.terminations[t.option];
            let g = grads[t.option].get_or_insert_with(|| vec![0.0; net.param_count()]);
            net.accumulate_grad(&t.next_obs, &out_grad, g)?;
        }
        if !mean_adv.is_finite() {
            return Err(Error::NonFiniteLoss {
                learner: "termination",
                update: self.term_opts[0].steps(),
            });
        }
        for (option, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                self.terminations[option].apply_update(&mut self.term_opts[option], &g)?;
            }
        }
        Ok(mean_adv)
    }

    pub fn sync_target(&mut self) {
        self.q_omega_target.sync(&self.q_omega);
    }

    /// Mean `β_ω` over a set of observations, one entry per option.
    pub fn mean_betas<'a>(&self, observations: impl IntoIterator<Item = &'a Observation>) -> Result<Vec<f64>> {
        let mut sums = vec![0.0; self.option_count()];
        let mut n = 0usize;
        for obs in observations {
            for (o, s) in sums.iter_mut().enumerate() {
                *s += self.beta(o, obs)?;
            }
            n += 1;
        }
        if n > 0 {
            sums.iter_mut().for_each(|s| *s /= n as f64);
        }
        Ok(sums)
    }

    pub fn param_norms(&self) -> Vec<(String, f64)> {
        let mut out = vec![("q_omega".to_string(), self.q_omega.param_norm())];
        for (i, t) in self.terminations.iter().enumerate() {
            out.push((format!("termination_{}", self.policies[i].name()), t.param_norm()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::Table;
    use crate::replay::tests::{obs, transition};
    use crate::util::seeded_rng;

    pub(crate) fn tabular_model(n_options: usize, states: usize, alpha: f64, tau: f64) -> OptionModel {
        let policies = IntraPolicy::STANDARD
            .iter()
            .cycle()
            .take(n_options)
            .copied()
            .collect();
        let cfg = OptionModelConfig {
            policies,
            alpha,
            tau,
            gamma: 0.9,
            baseline: TerminationBaseline::Soft,
            q_optimizer: OptimizerConfig::Sgd { lr: 1.0 },
            termination_optimizer: OptimizerConfig::Sgd { lr: 1.0 },
        };
        OptionModel::new(&cfg, &Approximator::Tabular, states, 1, &mut seeded_rng(0)).unwrap()
    }

    fn set_row(vf: &mut ValueFunction, state: usize, row: &[f64]) {
        match vf {
            ValueFunction::Tabular(t) => t.row_mut(state).copy_from_slice(row),
            ValueFunction::Network(_) => unreachable!(),
        }
    }

    #[test]
    fn hand_evaluated_option_target() {
        let mut m = tabular_model(2, 4, 0.1, 0.2);
        set_row(m.q_omega_mut(), 1, &[2.0, 4.0]);
        m.sync_target();
        let mut t = transition(0);
        t.option = 0;
        t.extrinsic = 1.0;
        t.intrinsic = 2.0;
        assert_eq!(m.beta(0, &t.next_obs).unwrap(), 0.5);
        let y = m.option_td_target(&t).unwrap();
        assert!((y - 3.9).abs() < 1e-12, "{y}");
    }

    #[test]
    fn saturated_termination_gives_max_bootstrap() {
        let mut m = tabular_model(3, 4, 0.5, 0.2);
        set_row(m.q_omega_mut(), 1, &[1.0, 7.0, -2.0]);
        m.sync_target();
        set_row(m.termination_mut(0), 1, &[1e4]);
        let mut t = transition(0);
        t.extrinsic = 0.5;
        t.intrinsic = 1.0;
        let y = m.option_td_target(&t).unwrap();
        assert_eq!(y, 0.5 + 0.5 * 1.0 + 0.9 * 7.0);
    }

    #[test]
    fn terminal_option_target_drops_bootstrap() {
        let mut m = tabular_model(2, 4, 0.1, 0.2);
        m.q_omega_mut().params_mut().fill(50.0);
        m.sync_target();
        let mut t = transition(0);
        t.extrinsic = 1.0;
        t.intrinsic = 2.0;
        t.done = true;
        assert_eq!(m.option_td_target(&t).unwrap(), 1.0 + 0.1 * 2.0);
    }

    #[test]
    fn unit_step_sets_option_value() {
        let mut m = tabular_model(2, 4, 0.1, 0.2);
        let mut t = transition(2);
        t.option = 1;
        t.extrinsic = 3.0;
        t.done = true;
        m.update_q_omega(&[t]).unwrap();
        assert_eq!(m.option_values(&obs(2)).unwrap(), vec![0.0, 3.0]);
    }

    #[test]
    fn converged_values_do_not_move() {
        let mut m = tabular_model(2, 4, 0.0, 0.2);
        set_row(m.q_omega_mut(), 0, &[1.0, 0.0]);
        let mut t = transition(0);
        t.extrinsic = 1.0;
        t.done = true;
        let before = m.q_omega().clone();
        assert_eq!(m.update_q_omega(&[t]).unwrap(), 0.0);
        assert_eq!(m.q_omega(), &before);
    }

    #[test]
    fn only_stored_options_change() {
        let mut m = tabular_model(4, 4, 0.0, 0.2);
        let mut a = transition(0);
        a.option = 1;
        a.extrinsic = 1.0;
        a.done = true;
        let mut b = transition(2);
        b.option = 3;
        b.extrinsic = 2.0;
        b.done = true;
        m.update_q_omega(&[a, b]).unwrap();
        let changed: Vec<usize> = m
            .q_omega()
            .params()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(changed, vec![1, 2 * 4 + 3]);
    }

    #[test]
    fn argmax_option_is_unchanged_under_max_baseline() {
        let mut m = tabular_model(2, 4, 0.0, 0.2);
        m.baseline = TerminationBaseline::Max;
        set_row(m.q_omega_mut(), 1, &[3.0, 1.0]);
        let before = m.termination(0).clone();
        let mut t = transition(0);
        t.option = 0;
        m.update_terminations(&[t]).unwrap();
        assert_eq!(m.termination(0), &before);
    }

    #[test]
    fn soft_baseline_reduces_to_max_at_zero_temperature() {
        let mut m = tabular_model(3, 4, 0.0, 1e-9);
        set_row(m.q_omega_mut(), 1, &[3.0, 1.0, 2.0]);
        assert_eq!(m.termination_advantage(0, &obs(1)).unwrap(), 0.0);
        m.set_tau(0.5);
        assert!(m.termination_advantage(0, &obs(1)).unwrap() > 0.0);
    }

    #[test]
    fn suboptimal_option_terminates_more() {
        for baseline in [TerminationBaseline::Max, TerminationBaseline::Soft] {
            let mut m = tabular_model(2, 4, 0.0, 0.2);
            m.baseline = baseline;
            set_row(m.q_omega_mut(), 1, &[1.0, 3.0]);
            let mut t = transition(0);
            t.option = 0;
            let before = m.beta(0, &obs(1)).unwrap();
            let adv = m.update_terminations(&[t]).unwrap();
            assert!(adv < 0.0);
            assert!(m.beta(0, &obs(1)).unwrap() > before, "{baseline:?}");
        }
    }

    #[test]
    fn zero_termination_lr_is_a_no_op() {
        let mut m = tabular_model(2, 4, 0.0, 0.2);
        m.term_opts = vec![OptimizerConfig::Sgd { lr: 0.0 }.build(); 2];
        set_row(m.q_omega_mut(), 1, &[1.0, 3.0]);
        let before = m.termination(0).clone();
        m.update_terminations(&[transition(0)]).unwrap();
        assert_eq!(m.termination(0), &before);
    }

    #[test]
    fn terminal_samples_do_not_train_terminations() {
        let mut m = tabular_model(2, 4, 0.0, 0.2);
        set_row(m.q_omega_mut(), 1, &[1.0, 3.0]);
        let mut t = transition(0);
        t.done = true;
        assert_eq!(m.update_terminations(&[t]).unwrap(), 0.0);
        assert!(m.termination(0).params().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn betas_stay_in_open_interval() {
        let mut m = tabular_model(2, 4, 0.0, 0.2);
        set_row(m.termination_mut(0), 0, &[30.0]);
        set_row(m.termination_mut(1), 0, &[-30.0]);
        let b0 = m.beta(0, &obs(0)).unwrap();
        let b1 = m.beta(1, &obs(0)).unwrap();
        assert!(b0 < 1.0 && b0 > 0.999);
        assert!(b1 > 0.0 && b1 < 0.001);
        let means = m.mean_betas([&obs(0), &obs(1)]).unwrap();
        assert!((means[0] - (b0 + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_temperature_selects_argmax() {
        let mut m = tabular_model(2, 4, 0.0, 1e-6);
        set_row(m.q_omega_mut(), 0, &[0.0, 10.0]);
        let mut rng = seeded_rng(1);
        for _ in 0..100 {
            assert_eq!(m.select_option(&obs(0), &mut rng).unwrap(), 1);
        }
        assert_eq!(m.selection_probs(&obs(0)).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn network_terminations_start_at_one_half() {
        let cfg = OptionModelConfig {
            policies: IntraPolicy::STANDARD.to_vec(),
            alpha: 0.1,
            tau: 0.2,
            gamma: 0.99,
            baseline: TerminationBaseline::Soft,
            q_optimizer: OptimizerConfig::RmsProp { lr: 1e-4 },
            termination_optimizer: OptimizerConfig::RmsProp { lr: 1e-4 },
        };
        let m = OptionModel::new(&cfg, &Approximator::network(), 0, 5, &mut seeded_rng(0)).unwrap();
        let o = Observation {
            index: 0,
            features: std::sync::Arc::from(vec![0.3, -1.0, 0.0, 2.0, 0.5]),
        };
        for opt in 0..4 {
            assert_eq!(m.beta(opt, &o).unwrap(), 0.5);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = OptionModelConfig {
            policies: vec![],
            alpha: 0.1,
            tau: 0.2,
            gamma: 0.99,
            baseline: TerminationBaseline::Soft,
            q_optimizer: OptimizerConfig::Sgd { lr: 1.0 },
            termination_optimizer: OptimizerConfig::Sgd { lr: 1.0 },
        };
        assert!(OptionModel::new(&cfg, &Approximator::Tabular, 4, 1, &mut seeded_rng(0)).is_err());
        cfg.policies = vec![IntraPolicy::Greedy];
        cfg.gamma = 1.0;
        assert!(OptionModel::new(&cfg, &Approximator::Tabular, 4, 1, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn single_always_terminating_option_matches_target_learner() {
        use crate::target::TargetLearner;
        let states = 6;
        let mut m = tabular_model(1, states, 0.3, 0.2);
        m.gamma = 0.95;
        m.q_opt = OptimizerConfig::Sgd { lr: 0.7 }.build();
        m.termination_mut(0).params_mut().fill(1e4);
        let mut target = TargetLearner::new(
            ValueFunction::Tabular(Table::new(states, 1, 0.0)),
            0.95,
            OptimizerConfig::Sgd { lr: 0.7 },
        )
        .with_intrinsic_weight(0.3);
        let mut rng = seeded_rng(3);
        use rand::Rng as _;
        for round in 0..50 {
            let batch: Vec<Transition> = (0..8)
                .map(|_| {
                    let mut t = transition(rng.gen_range(0..states - 1));
                    t.extrinsic = rng.gen_range(-1.0..1.0);
                    t.intrinsic = rng.gen_range(-5.0..5.0);
                    t.done = rng.gen_bool(0.2);
                    t
                })
                .collect();
            let a = m.update_q_omega(&batch).unwrap();
            let b = target.update(&batch).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
            if round % 10 == 9 {
                m.sync_target();
                target.sync_target();
            }
        }
        assert_eq!(m.q_omega(), target.q());
    }

    #[test]
    fn dominating_option_beta_falls_and_others_rise() {
        let mut m = tabular_model(4, 4, 0.0, 0.2);
        for s in 0..4 {
            set_row(m.q_omega_mut(), s, &[2.0, 0.5, 0.0, 1.0]);
        }
        let batch: Vec<Transition> = (0..4)
            .map(|o| {
                let mut t = transition(0);
                t.option = o;
                t
            })
            .collect();
        let mut prev = m.mean_betas([&obs(1)]).unwrap();
        for _ in 0..100 {
            m.update_terminations(&batch).unwrap();
            let now = m.mean_betas([&obs(1)]).unwrap();
            assert!(now[0] < prev[0]);
            for o in 1..4 {
                assert!(now[o] > prev[o]);
            }
            prev = now;
        }
    }
}
