//! The training loop, evaluation, seed sweeps and result files.

mod config;
mod metrics;
mod run;
mod sweep;

pub use config::{AgentKind, EnvRef, RunConfig, SCHEMA_VERSION};
pub use metrics::{read_columns, write_atomic, MetricsRow, POLICY_COLUMNS};
pub use run::{evaluate, train, train_traced, EpisodeRecord, EvalResult, Event, RunOutput, RunSummary};
pub use sweep::{report, sweep, Aggregate, SeedSeries, SweepReport, SweepRun, DEFAULT_SMOOTHING};

/// Output directory override for the command-line tools.
pub const OUT_DIR_ENV: &str = "LESSON_OUT_DIR";
