use rand::Rng as _;

use super::{IntraPolicy, OptionModel};
use crate::error::{Error, Result};
use crate::gridworld::{Action, EnvState, GridWorld, Observation};
use crate::intrinsic::{IntrinsicModule, IntrinsicSignal, PemCritic};
use crate::replay::Transition;
use crate::target::TargetLearner;
use crate::util::Rng;

/// Learners the intra-policies read from.
#[derive(Clone, Copy)]
pub struct IntraContext<'a> {
    pub target: &'a TargetLearner,
    pub pem: Option<&'a PemCritic>,
    pub count: Option<&'a PemCritic>,
    pub actions: usize,
}

/// Call-and-return bookkeeping: which option is running and for how long.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutorState {
    current: Option<usize>,
    repeated_action: Option<usize>,
    segment_length: u32,
}

impl ExecutorState {
    pub fn current(&self) -> Option<usize> {
        self.current
    }

    /// Steps the running option has executed so far.
    pub fn segment_length(&self) -> u32 {
        self.segment_length
    }

    /// Starts `option`. A TE-random option draws its action here.
    pub fn begin(&mut self, option: usize, policy: IntraPolicy, actions: usize, rng: &mut Rng) {
        self.current = Some(option);
        self.segment_length = 0;
        self.repeated_action = (policy == IntraPolicy::TeRandom).then(|| rng.gen_range(0..actions));
    }

    pub fn clear(&mut self) {
        *self = ExecutorState::default();
    }

    /// The action the running option takes at `obs`.
    pub fn intra_act(
        &self,
        model: &OptionModel,
        obs: &Observation,
        ctx: &IntraContext<'_>,
        rng: &mut Rng,
    ) -> Result<usize> {
        let option = self
            .current
            .ok_or_else(|| Error::InvalidConfig("no option is running".into()))?;
        match model.policy(option) {
            IntraPolicy::Greedy => ctx.target.act_greedy(obs),
            IntraPolicy::Random => Ok(rng.gen_range(0..ctx.actions)),
            IntraPolicy::TeRandom => Ok(self.repeated_action.expect("drawn at option start")),
            IntraPolicy::Pem => ctx
                .pem
                .ok_or_else(|| Error::InvalidConfig("pem option without a pem critic".into()))?
                .act(obs),
            IntraPolicy::Count => ctx
                .count
                .ok_or_else(|| Error::InvalidConfig("count option without a count critic".into()))?
                .act(obs),
        }
    }
}

/// Everything one behavior step produced.
#[derive(Debug, Clone)]
pub struct BehaviorStep {
    pub transition: Transition,
    pub next_state: EnvState,
    pub signal: IntrinsicSignal,
    /// Option chosen at episode start, before acting.
    pub initial_option: Option<usize>,
    /// Option chosen at the reached state after a termination.
    pub next_option: Option<usize>,
    /// `(option, length)` of the segment that ended on this step.
    pub finished_segment: Option<(usize, u32)>,
}

/// One environment step under the behavior policy.
///
/// Draw order on `rng` is fixed: option selection (and the TE-random action)
/// at episode start, the intra-policy action, the termination draw at the
/// reached state, then selection of the next option there if the running one
/// terminated and the episode goes on.
#[allow(clippy::too_many_arguments)]
pub fn run_behavior_step(
    exec: &mut ExecutorState,
    model: &OptionModel,
    env: &GridWorld,
    state: &EnvState,
    obs: &Observation,
    ctx: &IntraContext<'_>,
    intrinsic: &mut IntrinsicModule,
    rng: &mut Rng,
) -> Result<BehaviorStep> {
    let mut initial_option = None;
    if exec.current.is_none() {
        let option = model.select_option(obs, rng)?;
        exec.begin(option, model.policy(option), ctx.actions, rng);
        initial_option = Some(option);
    }
    let option = exec.current.expect("option running");
    let action = exec.intra_act(model, obs, ctx, rng)?;
    let step = env.step(state, Action::from_index(action))?;
    exec.segment_length += 1;
    let signal = intrinsic.observe(&step.obs)?;
    let terminated = model.should_terminate(option, &step.obs, step.done, rng)?;
    let finished_segment = terminated.then_some((option, exec.segment_length));
    let mut next_option = None;
    if step.done {
        exec.clear();
    } else if terminated {
        let next = model.select_option(&step.obs, rng)?;
        exec.begin(next, model.policy(next), ctx.actions, rng);
        next_option = Some(next);
    }
    Ok(BehaviorStep {
        transition: Transition {
            obs: obs.clone(),
            action,
            option,
            extrinsic: step.reward,
            intrinsic: signal.normalized,
            count_bonus: signal.count_bonus,
            next_obs: step.obs,
            done: step.done,
            option_terminated_next: terminated,
        },
        next_state: step.state,
        signal,
        initial_option,
        next_option,
        finished_segment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::{Approximator, OptimizerConfig, Table, ValueFunction};
    use crate::gridworld::{GridSpec, Task};
    use crate::intrinsic::{CriticSignal, RndPair, DEFAULT_CLIP};
    use crate::options::{OptionModelConfig, TerminationBaseline};
    use crate::util::seeded_rng;

    struct Rig {
        env: GridWorld,
        target: TargetLearner,
        pem: PemCritic,
        intrinsic: IntrinsicModule,
    }

    impl Rig {
        fn new(env: GridWorld) -> Self {
            let n = env.state_count();
            let table = || ValueFunction::Tabular(Table::new(n, Action::COUNT, 0.0));
            let sgd = OptimizerConfig::Sgd { lr: 0.5 };
            let rnd = RndPair::new(env.feature_len(), 64, 64, sgd, &mut seeded_rng(9));
            Rig {
                target: TargetLearner::new(table(), 0.99, sgd),
                pem: PemCritic::new(table(), 0.99, sgd, CriticSignal::PredictionError),
                intrinsic: IntrinsicModule::new(rnd, DEFAULT_CLIP, false),
                env,
            }
        }

        fn ctx(&self) -> IntraContext<'_> {
            IntraContext {
                target: &self.target,
                pem: Some(&self.pem),
                count: None,
                actions: Action::COUNT,
            }
        }
    }

    fn model(policies: &[IntraPolicy], states: usize, tau: f64) -> OptionModel {
        let cfg = OptionModelConfig {
            policies: policies.to_vec(),
            alpha: 0.1,
            tau,
            gamma: 0.99,
            baseline: TerminationBaseline::Soft,
            q_optimizer: OptimizerConfig::Sgd { lr: 0.5 },
            termination_optimizer: OptimizerConfig::Sgd { lr: 0.5 },
        };
        OptionModel::new(&cfg, &Approximator::Tabular, states, 1, &mut seeded_rng(0)).unwrap()
    }

    fn fill_logits(m: &mut OptionModel, option: usize, logit: f64) {
        m.termination_mut(option).params_mut().fill(logit);
    }

    fn empty8() -> GridWorld {
        GridWorld::new("empty-8x8".parse::<Task>().unwrap(), 0).unwrap()
    }

    /// Runs one episode, returning every step.
    fn episode(m: &OptionModel, rig: &mut Rig, rng: &mut Rng) -> Vec<BehaviorStep> {
        let mut exec = ExecutorState::default();
        let mut state = rig.env.initial_state();
        let mut obs = rig.env.observe(&state);
        let mut out = Vec::new();
        loop {
            let ctx = IntraContext {
                target: &rig.target,
                pem: Some(&rig.pem),
                count: None,
                actions: Action::COUNT,
            };
            let step = run_behavior_step(&mut exec, m, &rig.env, &state, &obs, &ctx, &mut rig.intrinsic, rng)
                .unwrap();
            state = step.next_state.clone();
            obs = step.transition.next_obs.clone();
            let done = step.transition.done;
            out.push(step);
            if done {
                return out;
            }
        }
    }

    #[test]
    fn te_random_segments_repeat_one_action() {
        let rig = Rig::new(empty8());
        let m = model(&[IntraPolicy::TeRandom], rig.env.state_count(), 0.2);
        let o = rig.env.observe(&rig.env.initial_state());
        let mut rng = seeded_rng(5);
        for _ in 0..20 {
            let mut exec = ExecutorState::default();
            exec.begin(0, IntraPolicy::TeRandom, Action::COUNT, &mut rng);
            let first = exec.intra_act(&m, &o, &rig.ctx(), &mut rng).unwrap();
            for _ in 1..7 {
                assert_eq!(exec.intra_act(&m, &o, &rig.ctx(), &mut rng).unwrap(), first);
            }
        }
    }

    #[test]
    fn random_option_is_uniform() {
        let rig = Rig::new(empty8());
        let m = model(&[IntraPolicy::Random], rig.env.state_count(), 0.2);
        let o = rig.env.observe(&rig.env.initial_state());
        let mut rng = seeded_rng(6);
        let mut exec = ExecutorState::default();
        exec.begin(0, IntraPolicy::Random, Action::COUNT, &mut rng);
        let n = 10_000;
        let mut counts = [0usize; Action::COUNT];
        for _ in 0..n {
            counts[exec.intra_act(&m, &o, &rig.ctx(), &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / Action::COUNT as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn pem_option_breaks_ties_low() {
        let mut rig = Rig::new(empty8());
        let o = rig.env.observe(&rig.env.initial_state());
        rig.pem.q_mut().params_mut()[o.index * Action::COUNT..][..3].copy_from_slice(&[0.1, 0.9, 0.9]);
        let m = model(&[IntraPolicy::Pem], rig.env.state_count(), 0.2);
        let mut exec = ExecutorState::default();
        let mut rng = seeded_rng(0);
        exec.begin(0, IntraPolicy::Pem, Action::COUNT, &mut rng);
        assert_eq!(exec.intra_act(&m, &o, &rig.ctx(), &mut rng).unwrap(), 1);
    }

    #[test]
    fn termination_frequencies() {
        let mut m = model(&[IntraPolicy::Greedy, IntraPolicy::Random], 4, 0.2);
        fill_logits(&mut m, 1, 20.0);
        let o = crate::replay::tests::obs(2);
        let mut rng = seeded_rng(7);
        let n = 100_000;
        let half = (0..n).filter(|_| m.should_terminate(0, &o, false, &mut rng).unwrap()).count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((half as f64 - n as f64 / 2.0).abs() < 3.0 * sigma, "{half}");
        let high = (0..n).filter(|_| m.should_terminate(1, &o, false, &mut rng).unwrap()).count();
        assert!(high as f64 / n as f64 > 0.999);
        fill_logits(&mut m, 0, -1e4);
        let mut probe = rng.clone();
        assert!(m.should_terminate(0, &o, true, &mut rng).unwrap());
        // The forced rule consumes no randomness.
        assert_eq!(rng.gen::<u64>(), probe.gen::<u64>());
    }

    #[test]
    fn softmax_selection_matches_closed_form() {
        let mut m = model(&[IntraPolicy::Greedy, IntraPolicy::Random], 4, 1.0);
        m.q_omega_mut().params_mut()[..2].copy_from_slice(&[1.0, 2.0]);
        let o = crate::replay::tests::obs(0);
        let mut rng = seeded_rng(8);
        let n = 100_000;
        let ones = (0..n).filter(|_| m.select_option(&o, &mut rng).unwrap() == 1).count();
        let p = 2f64.exp() / (1f64.exp() + 2f64.exp());
        assert!((p - 0.7311).abs() < 1e-4);
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((ones as f64 - n as f64 * p).abs() < 3.0 * sigma, "{ones}");

        let four = model(&IntraPolicy::STANDARD, 4, 0.2);
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[four.select_option(&o, &mut rng).unwrap()] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn zero_termination_keeps_the_first_option() {
        let mut rig = Rig::new(empty8());
        let mut m = model(&IntraPolicy::STANDARD, rig.env.state_count(), 0.2);
        for o in 0..4 {
            fill_logits(&mut m, o, -1e4);
        }
        let mut rng = seeded_rng(10);
        for _ in 0..10 {
            let steps = episode(&m, &mut rig, &mut rng);
            let first = steps[0].transition.option;
            assert!(steps.iter().all(|s| s.transition.option == first));
            assert!(steps[0].initial_option.is_some());
            assert!(steps.iter().all(|s| s.next_option.is_none()));
            assert_eq!(steps.last().unwrap().finished_segment, Some((first, steps.len() as u32)));
        }
    }

    #[test]
    fn always_terminating_greedy_matches_greedy_rollout() {
        let mut rig = Rig::new(empty8());
        let mut init = seeded_rng(11);
        for v in rig.target.q_mut().params_mut() {
            *v = init.gen_range(0.0..1.0);
        }
        let mut m = model(&IntraPolicy::STANDARD, rig.env.state_count(), 1e-7);
        for o in 0..4 {
            fill_logits(&mut m, o, 1e4);
        }
        // The greedy option dominates everywhere.
        for row in m.q_omega_mut().params_mut().chunks_mut(4) {
            row.copy_from_slice(&[1.0, 0.5, 0.5, 0.5]);
        }
        let steps = episode(&m, &mut rig, &mut seeded_rng(12));
        let mut state = rig.env.initial_state();
        for s in &steps {
            let a = rig.target.act_greedy(&rig.env.observe(&state)).unwrap();
            assert_eq!(s.transition.action, a);
            assert_eq!(s.transition.option, 0);
            assert!(s.transition.option_terminated_next);
            state = rig.env.step(&state, Action::from_index(a)).unwrap().state;
        }
    }

    #[test]
    fn golden_trace() {
        let text = r#######"{
            "width": 6, "height": 3,
            "rows": ["######", "#...G#", "######"],
            "agent_start": {"cell": {"col": 1, "row": 1}, "heading": "east"}
        }"#######;
        let env = GridWorld::from_spec(GridSpec::from_json_str(text).unwrap()).unwrap();
        let mut rig = Rig::new(env);
        let s0 = rig.env.initial_state();
        let fwd = Action::Forward.index();
        let s1 = rig.env.step(&s0, Action::Forward).unwrap().state;
        let s2 = rig.env.step(&s1, Action::Forward).unwrap().state;
        let (i0, i1, i2) = (rig.env.encode(&s0), rig.env.encode(&s1), rig.env.encode(&s2));
        rig.target.q_mut().params_mut()[i0 * Action::COUNT + fwd] = 1.0;
        for i in [i1, i2] {
            rig.pem.q_mut().params_mut()[i * Action::COUNT + fwd] = 1.0;
        }
        // Greedy wins at the start and always stops; PEM wins afterwards and
        // never stops.
        let mut m = model(&[IntraPolicy::Greedy, IntraPolicy::Pem], rig.env.state_count(), 0.0);
        m.q_omega_mut().params_mut()[i0 * 2] = 1.0;
        m.q_omega_mut().params_mut()[i1 * 2 + 1] = 1.0;
        fill_logits(&mut m, 0, 1e4);
        fill_logits(&mut m, 1, -1e4);

        let mut reference = rig.intrinsic.clone();
        let steps = episode(&m, &mut rig, &mut seeded_rng(13));
        assert_eq!(steps.len(), 3);
        let got: Vec<_> = steps
            .iter()
            .map(|s| {
                let t = &s.transition;
                (t.obs.index, t.action, t.option, t.next_obs.index, t.done, t.option_terminated_next)
            })
            .collect();
        let i3 = rig.env.encode(&steps[2].next_state);
        assert_eq!(
            got,
            vec![
                (i0, fwd, 0, i1, false, true),
                (i1, fwd, 1, i2, false, false),
                (i2, fwd, 1, i3, true, true),
            ]
        );
        assert_eq!(
            steps.iter().map(|s| (s.initial_option, s.next_option, s.finished_segment)).collect::<Vec<_>>(),
            vec![(Some(0), Some(1), Some((0, 1))), (None, None, None), (None, None, Some((1, 2)))]
        );
        let rewards: Vec<f64> = steps.iter().map(|s| s.transition.extrinsic).collect();
        assert_eq!(rewards, vec![0.0, 0.0, 10.0 * (1.0 - 0.9 * 3.0 / 100.0)]);
        for s in &steps {
            let expected = reference.observe(&s.transition.next_obs).unwrap();
            assert_eq!(s.signal, expected);
            assert_eq!(s.transition.intrinsic, expected.normalized);
        }
    }
}
