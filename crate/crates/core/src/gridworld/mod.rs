//! Deterministic gridworld tasks with full-state observations.
//!
//! A [`Task`] describes a family of layouts (possibly seeded); realizing it
//! with a seed gives a concrete [`GridSpec`], which a [`GridWorld`] steps
//! through. Dynamics are deterministic: the seed only affects placement.

mod env;
mod heatmap;
mod spec;
mod tasks;

pub use env::{EnvState, GridWorld, Observation, Step};
pub use heatmap::Heatmap;
pub use spec::{Action, AgentStart, Cell, GridSpec, Heading, Tile};
pub use tasks::{GoalPlacement, Task};

/// MiniGrid-style terminal reward scale.
pub const DEFAULT_REWARD_SCALE: f64 = 10.0;
/// Fraction of the reward lost when the goal is reached at `max_steps`.
pub const DEFAULT_STEP_DECREMENT: f64 = 0.9;
pub const DEFAULT_MAX_STEPS: u32 = 100;
