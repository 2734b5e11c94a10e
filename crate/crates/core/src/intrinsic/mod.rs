//! History-aware exploration signals: random network distillation with a
//! streaming normalizer, the critic of intrinsic reward used by the
//! prediction-error intra-policy, and a tabular visit counter.

mod counter;
mod normalizer;
mod pem;
mod rnd;

pub use counter::StateCounter;
pub use normalizer::RunningNormalizer;
pub use pem::{CriticSignal, PemCritic};
pub use rnd::RndPair;

use crate::error::Result;
use crate::gridworld::Observation;

/// Normalized intrinsic rewards are clipped to this magnitude.
pub const DEFAULT_CLIP: f64 = 5.0;
/// Output width of both RND networks.
pub const EMBED_DIM: usize = 64;

/// Intrinsic quantities computed for one reached state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntrinsicSignal {
    pub raw_error: f64,
    pub normalized: f64,
    pub count_bonus: f64,
}

/// Per-step intrinsic reward source owned by a training loop.
#[derive(Debug, Clone)]
pub struct IntrinsicModule {
    pub rnd: RndPair,
    pub normalizer: RunningNormalizer,
    pub counter: Option<StateCounter>,
}

impl IntrinsicModule {
    pub fn new(rnd: RndPair, clip: f64, count_states: bool) -> Self {
        IntrinsicModule {
            rnd,
            normalizer: RunningNormalizer::new(clip),
            counter: count_states.then(StateCounter::default),
        }
    }

    /// Scores the state reached by an environment step. Updates the running
    /// statistics (and visit counts) before reading them.
    pub fn observe(&mut self, next_obs: &Observation) -> Result<IntrinsicSignal> {
        let raw_error = self.rnd.raw_error(next_obs)?;
        let normalized = self.normalizer.normalize(raw_error)?;
        let count_bonus = self
            .counter
            .as_mut()
            .map_or(0.0, |c| c.count_bonus(next_obs));
        Ok(IntrinsicSignal {
            raw_error,
            normalized,
            count_bonus,
        })
    }
}
