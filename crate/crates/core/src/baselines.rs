//! Comparison exploration strategies sharing the target learner: ε-greedy,
//! its temporally extended variants with zeta-distributed durations, the
//! RND-augmented learner, and equal-weight combining of all four.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::target::TargetLearner;
use crate::util::Rng;

/// Truncated zeta distribution over durations `1..=n_max`,
/// `P(n) ∝ n^(-mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaSampler {
    mu: f64,
    n_max: u64,
    cdf: Vec<f64>,
}

impl ZetaSampler {
    pub const DEFAULT_MU: f64 = 2.0;
    pub const DEFAULT_N_MAX: u64 = 10_000;

    pub fn new(mu: f64, n_max: u64) -> Result<Self> {
        if n_max == 0 || !(mu > 0.0) {
            return Err(Error::InvalidConfig(format!("zeta mu {mu}, n_max {n_max}")));
        }
        let mut cdf: Vec<f64> = Vec::with_capacity(n_max as usize);
        let mut acc = 0.0;
        for n in 1..=n_max {
            acc += (n as f64).powf(-mu);
            cdf.push(acc);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Ok(ZetaSampler { mu, n_max, cdf })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    pub fn probability(&self, n: u64) -> f64 {
        match n {
            0 => 0.0,
            1 => self.cdf[0],
            n if n <= self.n_max => self.cdf[n as usize - 1] - self.cdf[n as usize - 2],
            _ => 0.0,
        }
    }

    /// Inverse-CDF draw. A sampler with `n_max = 1` consumes no randomness.
    pub fn sample(&self, rng: &mut Rng) -> u64 {
        if self.n_max == 1 {
            return 1;
        }
        let u: f64 = rng.gen();
        let i = self.cdf.partition_point(|&c| c <= u);
        (i as u64 + 1).min(self.n_max)
    }
}

impl Default for ZetaSampler {
    fn default() -> Self {
        ZetaSampler::new(Self::DEFAULT_MU, Self::DEFAULT_N_MAX).expect("valid defaults")
    }
}

/// Linear ε decay from `start` to `end` over `horizon` steps, constant after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule {
            start: 0.9,
            end: 0.05,
            horizon: 100_000,
        }
    }
}

impl EpsSchedule {
    pub fn constant(eps: f64) -> Self {
        EpsSchedule {
            start: eps,
            end: eps,
            horizon: 0,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.horizon {
            return self.end;
        }
        let frac = step as f64 / self.horizon as f64;
        let eps = self.start + (self.end - self.start) * frac;
        eps.clamp(self.end.min(self.start), self.end.max(self.start))
    }
}

/// Which comparison strategy drives behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    EpsGreedy,
    EpszGreedy,
    EpsrGreedy,
    Rnd,
    Ewc,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::EpsGreedy,
        BaselineKind::EpszGreedy,
        BaselineKind::EpsrGreedy,
        BaselineKind::Rnd,
        BaselineKind::Ewc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::EpsGreedy => "eps-greedy",
            BaselineKind::EpszGreedy => "epsz-greedy",
            BaselineKind::EpsrGreedy => "epsr-greedy",
            BaselineKind::Rnd => "rnd",
            BaselineKind::Ewc => "ewc",
        }
    }

    /// Whether the kind needs a Q trained on extrinsic plus intrinsic reward.
    pub fn needs_mixed_learner(self) -> bool {
        matches!(self, BaselineKind::Rnd | BaselineKind::Ewc)
    }
}

/// The four strategies equal-weight combining chooses between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Eps,
    EpsZ,
    EpsR,
    Rnd,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Eps, Strategy::EpsZ, Strategy::EpsR, Strategy::Rnd];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Greedy sources for the baselines. For [`BaselineKind::Rnd`] `target` is
/// itself the mixed-reward learner; for EWC `mixed` is the auxiliary one.
#[derive(Clone, Copy)]
pub struct BaselineLearners<'a> {
    pub target: &'a TargetLearner,
    pub mixed: Option<&'a TargetLearner>,
    pub actions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Segment {
    remaining: u64,
    /// Set for εz segments, which repeat one action.
    repeated: Option<usize>,
}

/// Per-run state of a baseline behavior policy: any exploration segment in
/// progress and, for EWC, the strategy choice log.
#[derive(Debug, Clone)]
pub struct BaselineActor {
    kind: BaselineKind,
    zeta: ZetaSampler,
    segment: Option<Segment>,
    strategy_counts: [u64; 4],
}

impl BaselineActor {
    pub fn new(kind: BaselineKind, zeta: ZetaSampler) -> Self {
        BaselineActor {
            kind,
            zeta,
            segment: None,
            strategy_counts: [0; 4],
        }
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    /// How many times EWC picked each strategy, in [`Strategy::ALL`] order.
    pub fn strategy_counts(&self) -> [u64; 4] {
        self.strategy_counts
    }

    /// True while a temporally extended exploration segment is running.
    pub fn in_segment(&self) -> bool {
        self.segment.is_some()
    }

    /// Exploration durations are cut at episode boundaries.
    pub fn end_episode(&mut self) {
        self.segment = None;
    }

    fn continue_segment(&mut self, actions: usize, rng: &mut Rng) -> Option<usize> {
        let seg = self.segment.as_mut()?;
        let a = seg.repeated.unwrap_or_else(|| rng.gen_range(0..actions));
        seg.remaining -= 1;
        if seg.remaining == 0 {
            self.segment = None;
        }
        Some(a)
    }

    fn start_segment(&mut self, repeat: bool, actions: usize, rng: &mut Rng) -> usize {
        let a = rng.gen_range(0..actions);
        let n = self.zeta.sample(rng);
        if n > 1 {
            self.segment = Some(Segment {
                remaining: n - 1,
                repeated: repeat.then_some(a),
            });
        }
        a
    }

    fn act_with(
        &mut self,
        strategy: Strategy,
        learners: &BaselineLearners<'_>,
        obs: &Observation,
        eps: f64,
        rng: &mut Rng,
    ) -> Result<usize> {
        let explore = rng.gen::<f64>() < eps;
        match strategy {
            Strategy::Eps | Strategy::Rnd if explore => Ok(rng.gen_range(0..learners.actions)),
            Strategy::EpsZ if explore => Ok(self.start_segment(true, learners.actions, rng)),
            Strategy::EpsR if explore => Ok(self.start_segment(false, learners.actions, rng)),
            Strategy::Rnd => match (self.kind, learners.mixed) {
                (BaselineKind::Ewc, Some(mixed)) => mixed.act_greedy(obs),
                (BaselineKind::Ewc, None) => {
                    Err(Error::InvalidConfig("ewc needs a mixed-reward learner".into()))
                }
                _ => learners.target.act_greedy(obs),
            },
            _ => learners.target.act_greedy(obs),
        }
    }

    /// Behavior action at `obs` with exploration rate `eps`.
    pub fn act(
        &mut self,
        learners: &BaselineLearners<'_>,
        obs: &Observation,
        eps: f64,
        rng: &mut Rng,
    ) -> Result<usize> {
        if let Some(a) = self.continue_segment(learners.actions, rng) {
            return Ok(a);
        }
        let strategy = match self.kind {
            BaselineKind::EpsGreedy => Strategy::Eps,
            BaselineKind::EpszGreedy => Strategy::EpsZ,
            BaselineKind::EpsrGreedy => Strategy::EpsR,
            BaselineKind::Rnd => Strategy::Rnd,
            BaselineKind::Ewc => {
                let s = Strategy::ALL[rng.gen_range(0..4)];
                self.strategy_counts[s.index()] += 1;
                s
            }
        };
        self.act_with(strategy, learners, obs, eps, rng)
    }
}
