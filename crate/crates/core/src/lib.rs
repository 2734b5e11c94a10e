//! Exploration with a learned mixture of predefined exploration policies.
//!
//! A target learner `Q_T` fits extrinsic reward from replay. Behavior comes
//! from an option model whose options are fixed intra-policies (greedy,
//! random, temporally extended random, prediction-error maximizing) chosen by
//! an option-value function and stopped by learned termination functions.
//! The [`harness`] module wires everything into a training loop.

pub mod baselines;
pub mod error;
pub mod funcapprox;
pub mod gridworld;
pub mod harness;
pub mod intrinsic;
pub mod options;
pub mod replay;
pub mod target;
pub mod util;

pub use baselines::{BaselineKind, EpsSchedule, ZetaSampler};
pub use error::{Error, Result};
pub use funcapprox::{Approximator, OptimizerConfig, ValueFunction};
pub use harness::{AgentKind, RunConfig};
pub use gridworld::{Action, EnvState, GridSpec, GridWorld, Observation, Task};
pub use options::{IntraPolicy, OptionModel, OptionModelConfig, TerminationBaseline};
pub use replay::{ReplayBuffer, Transition};
pub use target::TargetLearner;
