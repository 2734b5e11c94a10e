use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, EpsSchedule, ZetaSampler};
use crate::error::{Error, Result};
use crate::funcapprox::{Approximator, OptimizerConfig};
use crate::gridworld::Task;
use crate::intrinsic::{DEFAULT_CLIP, EMBED_DIM};
use crate::options::{IntraPolicy, TerminationBaseline};

/// Version of the JSON config layout. Bumped on incompatible changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Behavior policy driving a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Lesson,
    EpsGreedy,
    EpszGreedy,
    EpsrGreedy,
    Rnd,
    Ewc,
}

impl AgentKind {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            AgentKind::Lesson => None,
            AgentKind::EpsGreedy => Some(BaselineKind::EpsGreedy),
            AgentKind::EpszGreedy => Some(BaselineKind::EpszGreedy),
            AgentKind::EpsrGreedy => Some(BaselineKind::EpsrGreedy),
            AgentKind::Rnd => Some(BaselineKind::Rnd),
            AgentKind::Ewc => Some(BaselineKind::Ewc),
        }
    }

    pub fn name(self) -> &'static str {
        self.baseline().map_or("lesson", BaselineKind::name)
    }

    /// Whether the run scores states with the RND module.
    pub fn uses_intrinsic(self) -> bool {
        matches!(self, AgentKind::Lesson | AgentKind::Rnd | AgentKind::Ewc)
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidConfig(format!("unknown agent kind `{s}`")))
    }
}

/// An environment given either by suite id or as a full task description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvRef {
    Id(String),
    Task(Task),
}

impl EnvRef {
    pub fn task(&self) -> Result<Task> {
        match self {
            EnvRef::Id(id) => id.parse(),
            EnvRef::Task(t) => Ok(t.clone()),
        }
    }
}

/// Everything needed to reproduce a run. Serialized next to its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Label used for output subdirectories and report rows.
    pub name: String,
    pub env: EnvRef,
    pub agent: AgentKind,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    pub approximator: Approximator,
    pub gamma: f64,

    /// Intrinsic reward weight (option values and the RND baselines).
    pub alpha: f64,
    /// Option selection temperature.
    pub tau: f64,
    pub options: Vec<IntraPolicy>,
    pub termination_baseline: TerminationBaseline,

    pub eps: EpsSchedule,
    pub zeta_mu: f64,
    pub zeta_n_max: u64,

    pub target_optimizer: OptimizerConfig,
    pub option_optimizer: OptimizerConfig,
    pub termination_optimizer: OptimizerConfig,
    pub critic_optimizer: OptimizerConfig,
    pub rnd_optimizer: OptimizerConfig,
    pub rnd_hidden: usize,
    pub embed_dim: usize,
    pub intrinsic_clip: f64,

    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// No learning before this many environment steps.
    pub learning_starts: u64,
    /// Steps between value-function updates.
    pub update_interval: u64,
    /// Steps between option-value and termination updates.
    pub option_update_interval: u64,
    /// Environment steps between target-copy syncs.
    pub sync_period: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Steps between samples of the intrinsic reward trace.
    pub trace_interval: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::desk()
    }
}

impl RunConfig {
    /// Small tabular profile that runs in seconds per seed.
    pub fn desk() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            name: "lesson".into(),
            env: EnvRef::Id("empty-8x8".into()),
            agent: AgentKind::Lesson,
            seeds: (0..10).collect(),
            total_steps: 50_000,
            approximator: Approximator::Tabular,
            gamma: 0.9,
            alpha: 0.01,
            tau: 0.2,
            options: IntraPolicy::STANDARD.to_vec(),
            termination_baseline: TerminationBaseline::Soft,
            eps: EpsSchedule::default(),
            zeta_mu: ZetaSampler::DEFAULT_MU,
            zeta_n_max: ZetaSampler::DEFAULT_N_MAX,
            target_optimizer: OptimizerConfig::Sgd { lr: 1.0 },
            option_optimizer: OptimizerConfig::Sgd { lr: 1.0 },
            // Termination gradients carry a β(1-β) factor and small advantages.
            termination_optimizer: OptimizerConfig::Sgd { lr: 100.0 },
            critic_optimizer: OptimizerConfig::Sgd { lr: 1.0 },
            rnd_optimizer: OptimizerConfig::Adam { lr: 1e-3 },
            rnd_hidden: 64,
            embed_dim: EMBED_DIM,
            intrinsic_clip: DEFAULT_CLIP,
            buffer_capacity: 10_000,
            batch_size: 32,
            learning_starts: 1_000,
            update_interval: 10,
            option_update_interval: 10,
            sync_period: 100,
            eval_interval: 1_000,
            eval_episodes: 20,
            trace_interval: 100,
            output_dir: PathBuf::from("runs"),
        }
    }

    /// The large-budget network profile of the original MiniGrid runs.
    pub fn full() -> Self {
        let rms = OptimizerConfig::RmsProp { lr: 1e-4 };
        RunConfig {
            name: "lesson-full".into(),
            env: EnvRef::Id("empty-16x16".into()),
            total_steps: 1_000_000,
            approximator: Approximator::network(),
            gamma: 0.99,
            alpha: 0.1,
            tau: 0.02,
            target_optimizer: rms,
            option_optimizer: rms,
            termination_optimizer: rms,
            critic_optimizer: rms,
            rnd_optimizer: OptimizerConfig::Adam { lr: 1e-4 },
            buffer_capacity: 500_000,
            batch_size: 256,
            learning_starts: 0,
            sync_period: 1_000,
            eval_interval: 10_000,
            trace_interval: 1_000,
            ..RunConfig::desk()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.env.task()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(self.alpha >= 0.0) || !(self.tau >= 0.0) {
            return bad("alpha and tau must be non-negative".into());
        }
        if self.agent == AgentKind::Lesson && self.options.is_empty() {
            return bad("lesson needs at least one option".into());
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return bad("buffer_capacity and batch_size must be positive".into());
        }
        for (name, v) in [
            ("update_interval", self.update_interval),
            ("option_update_interval", self.option_update_interval),
            ("sync_period", self.sync_period),
            ("eval_interval", self.eval_interval),
            ("trace_interval", self.trace_interval),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive".into());
        }
        ZetaSampler::new(self.zeta_mu, self.zeta_n_max)?;
        Ok(())
    }

    /// A copy with a different label and agent.
    pub fn with_agent(&self, name: &str, agent: AgentKind) -> Self {
        RunConfig {
            name: name.to_string(),
            agent,
            ..self.clone()
        }
    }
}
