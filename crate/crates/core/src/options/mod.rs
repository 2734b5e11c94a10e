//! The behavior policy: predefined intra-policies run as options under a
//! call-and-return executor, with a learned option-value function and
//! learned per-option termination functions.

mod executor;
mod model;

use serde::{Deserialize, Serialize};

pub use executor::{run_behavior_step, BehaviorStep, ExecutorState, IntraContext};
pub use model::{OptionModel, OptionModelConfig, TerminationBaseline};

/// The predefined intra-policies an option can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntraPolicy {
    /// Greedy with respect to the target action values.
    Greedy,
    /// Fresh uniform action every step.
    Random,
    /// One uniform action drawn at option start, repeated until termination.
    TeRandom,
    /// Greedy with respect to the prediction-error critic.
    Pem,
    /// Greedy with respect to the count-bonus critic.
    Count,
}

impl IntraPolicy {
    /// The standard four: greedy, random, TE-random and PEM.
    pub const STANDARD: [IntraPolicy; 4] = [
        IntraPolicy::Greedy,
        IntraPolicy::Random,
        IntraPolicy::TeRandom,
        IntraPolicy::Pem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntraPolicy::Greedy => "greedy",
            IntraPolicy::Random => "random",
            IntraPolicy::TeRandom => "te-random",
            IntraPolicy::Pem => "pem",
            IntraPolicy::Count => "count",
        }
    }
}
