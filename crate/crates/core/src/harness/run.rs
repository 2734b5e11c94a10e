use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{AgentKind, RunConfig};
use super::metrics::{csv_bytes, fnv1a, metrics_csv, write_atomic, MetricsRow, POLICY_COLUMNS};
use crate::baselines::{BaselineActor, BaselineLearners, ZetaSampler};
use crate::error::{Error, Result};
use crate::gridworld::{Action, GridWorld, Heatmap};
use crate::intrinsic::{CriticSignal, IntrinsicModule, IntrinsicSignal, PemCritic, RndPair};
use crate::options::{
    run_behavior_step, ExecutorState, IntraContext, IntraPolicy, OptionModel, OptionModelConfig,
};
use crate::replay::{ReplayBuffer, Transition};
use crate::target::TargetLearner;
use crate::util::{derived_rng, mean, std_dev, Rng};

/// Steps of the training loop, in the order they happen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Event {
    Behavior,
    Intrinsic,
    Push,
    TargetUpdate,
    MixedUpdate,
    OptionValueUpdate,
    TerminationUpdate,
    PredictorUpdate,
    CriticUpdate,
    Sync,
    Eval,
}

/// Greedy target-policy evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    pub std: f64,
    pub success: f64,
}

/// Runs the greedy target policy for `episodes` episodes with no
/// exploration and no learning. Each episode resets with `seed`.
pub fn evaluate(q: &TargetLearner, env: &mut GridWorld, episodes: usize, seed: u64) -> Result<EvalResult> {
    let mut returns = Vec::with_capacity(episodes);
    let mut successes = 0usize;
    for _ in 0..episodes {
        let (mut state, mut obs) = env.reset(seed)?;
        let mut ret = 0.0;
        loop {
            let a = q.act_greedy(&obs)?;
            let step = env.step(&state, Action::from_index(a))?;
            ret += step.reward;
            if step.done {
                successes += (step.reward > 0.0) as usize;
                break;
            }
            state = step.state;
            obs = step.obs;
        }
        returns.push(ret);
    }
    Ok(EvalResult {
        mean: mean(&returns),
        std: std_dev(&returns),
        success: successes as f64 / episodes.max(1) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: u64,
    /// Environment steps taken when the episode ended.
    pub end_step: u64,
    pub ret: f64,
    pub length: u32,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub total_steps: u64,
    pub episodes: u64,
    /// Mean greedy evaluation return over all checkpoints.
    pub auc: f64,
    pub final_eval_return: Option<f64>,
    pub final_eval_success: Option<f64>,
    /// Behavior-policy success over training episodes ending in the last
    /// tenth of the run.
    pub train_success_last_tenth: Option<f64>,
    /// Mean option termination probability over checkpoints in the first
    /// and last tenth of the run, keyed by intra-policy name.
    pub beta_first_tenth: BTreeMap<String, f64>,
    pub beta_last_tenth: BTreeMap<String, f64>,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeRecord>,
    pub heatmap: Heatmap,
    /// `(intra-policy, segment length) -> count`.
    pub segments: BTreeMap<(IntraPolicy, u32), u64>,
    /// `(step, raw prediction error, normalized intrinsic reward)`.
    pub intrinsic_trace: Vec<(u64, f64, f64)>,
    pub ewc_counts: Option<[u64; 4]>,
    pub summary: RunSummary,
    pub target: TargetLearner,
}

enum Behavior {
    Lesson(ExecutorState),
    Baseline(BaselineActor),
}

struct Agent {
    target: TargetLearner,
    /// Mixed-reward learner behind EWC's RND strategy.
    mixed: Option<TargetLearner>,
    pem: Option<PemCritic>,
    count: Option<PemCritic>,
    options: Option<OptionModel>,
    intrinsic: Option<IntrinsicModule>,
    behavior: Behavior,
}

impl Agent {
    fn new(cfg: &RunConfig, env: &GridWorld, rng: &mut Rng) -> Result<Self> {
        let (states, features, actions) = (env.state_count(), env.feature_len(), env.action_count());
        let approx = &cfg.approximator;
        let lesson = cfg.agent == AgentKind::Lesson;
        let has = |p: IntraPolicy| lesson && cfg.options.contains(&p);
        let mixed_weight = if cfg.agent == AgentKind::Rnd { cfg.alpha } else { 0.0 };
        let target = TargetLearner::new(approx.build(states, features, actions, rng), cfg.gamma, cfg.target_optimizer)
            .with_intrinsic_weight(mixed_weight);
        let mixed = (cfg.agent == AgentKind::Ewc).then(|| {
            TargetLearner::new(approx.build(states, features, actions, rng), cfg.gamma, cfg.target_optimizer)
                .with_intrinsic_weight(cfg.alpha)
        });
        let intrinsic = cfg.agent.uses_intrinsic().then(|| {
            let rnd = RndPair::new(features, cfg.rnd_hidden, cfg.embed_dim, cfg.rnd_optimizer, rng);
            IntrinsicModule::new(rnd, cfg.intrinsic_clip, has(IntraPolicy::Count))
        });
        let critic = |signal, rng: &mut Rng| {
            PemCritic::new(approx.build(states, features, actions, rng), cfg.gamma, cfg.critic_optimizer, signal)
        };
        let pem = has(IntraPolicy::Pem).then(|| critic(CriticSignal::PredictionError, rng));
        let count = has(IntraPolicy::Count).then(|| critic(CriticSignal::CountBonus, rng));
        let (options, behavior) = match cfg.agent.baseline() {
            None => {
                let model_cfg = OptionModelConfig {
                    policies: cfg.options.clone(),
                    alpha: cfg.alpha,
                    tau: cfg.tau,
                    gamma: cfg.gamma,
                    baseline: cfg.termination_baseline,
                    q_optimizer: cfg.option_optimizer,
                    termination_optimizer: cfg.termination_optimizer,
                };
                let model = OptionModel::new(&model_cfg, approx, states, features, rng)?;
                (Some(model), Behavior::Lesson(ExecutorState::default()))
            }
            Some(kind) => {
                let zeta = ZetaSampler::new(cfg.zeta_mu, cfg.zeta_n_max)?;
                (None, Behavior::Baseline(BaselineActor::new(kind, zeta)))
            }
        };
        Ok(Agent {
            target,
            mixed,
            pem,
            count,
            options,
            intrinsic,
            behavior,
        })
    }

    fn sync(&mut self) {
        self.target.sync_target();
        if let Some(m) = &mut self.mixed {
            m.sync_target();
        }
        for c in [&mut self.pem, &mut self.count].into_iter().flatten() {
            c.sync_target();
        }
        if let Some(o) = &mut self.options {
            o.sync_target();
        }
    }

    fn param_norms(&self) -> Vec<(String, f64)> {
        let mut out = vec![("target".to_string(), self.target.q().param_norm())];
        if let Some(m) = &self.mixed {
            out.push(("mixed".into(), m.q().param_norm()));
        }
        if let Some(c) = &self.pem {
            out.push(("pem".into(), c.q().param_norm()));
        }
        if let Some(c) = &self.count {
            out.push(("count".into(), c.q().param_norm()));
        }
        if let Some(o) = &self.options {
            out.extend(o.param_norms());
        }
        out
    }
}

/// Running sums between two checkpoints.
#[derive(Default)]
struct Window {
    returns: Vec<f64>,
    successes: usize,
    intrinsic: Vec<f64>,
    raw_error: Vec<f64>,
    losses: [Vec<f64>; 4],
    visited: BTreeSet<usize>,
    decisions: [u64; 5],
    steps: [u64; 5],
}

const TARGET_LOSS: usize = 0;
const OPTION_LOSS: usize = 1;
const CRITIC_LOSS: usize = 2;
const PREDICTOR_LOSS: usize = 3;

fn mean_opt(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| mean(xs))
}

fn column_of(p: IntraPolicy) -> usize {
    POLICY_COLUMNS.iter().position(|&c| c == p).expect("every policy has a column")
}

fn shares(counts: &[u64; 5], present: &[bool; 5]) -> [Option<f64>; 5] {
    let total: u64 = counts.iter().sum();
    let mut out = [None; 5];
    for i in 0..5 {
        if present[i] && total > 0 {
            out[i] = Some(counts[i] as f64 / total as f64);
        }
    }
    out
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    step: u64,
    error: String,
    param_norms: Vec<(String, f64)>,
    batch: Vec<DiagnosticSample>,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct DiagnosticSample {
    state: usize,
    action: usize,
    option: usize,
    extrinsic: f64,
    intrinsic: f64,
    next_state: usize,
    done: bool,
}

/// Trains one seed. With `out` set, artifacts are written there.
pub fn train(cfg: &RunConfig, seed: u64, out: Option<&Path>) -> Result<RunOutput> {
    train_traced(cfg, seed, out, None)
}

/// [`train`] that also records the order of loop events per step.
pub fn train_traced(
    cfg: &RunConfig,
    seed: u64,
    out: Option<&Path>,
    mut trace: Option<&mut Vec<(u64, Event)>>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let mut emit = |t: u64, e: Event| {
        if let Some(tr) = trace.as_deref_mut() {
            tr.push((t, e));
        }
    };
    let task = cfg.env.task()?;
    let mut env = GridWorld::new(task, seed)?;
    let mut eval_env = env.clone();
    let mut init_rng = derived_rng(seed, "init");
    let mut behavior_rng = derived_rng(seed, "behavior");
    let mut replay_rng = derived_rng(seed, "replay");
    let mut agent = Agent::new(cfg, &env, &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let actions = env.action_count();

    let mut present = [false; 5];
    if let Some(o) = &agent.options {
        for &p in o.policies() {
            present[column_of(p)] = true;
        }
    }

    let mut rows = Vec::new();
    let mut episodes: Vec<EpisodeRecord> = Vec::new();
    let mut heatmap = Heatmap::new(env.spec().width, env.spec().height);
    let mut segments: BTreeMap<(IntraPolicy, u32), u64> = BTreeMap::new();
    let mut intrinsic_trace = Vec::new();
    let mut window = Window::default();

    let (mut state, mut obs) = env.reset(seed)?;
    heatmap.record(state.agent);
    let (mut ep_return, mut ep_len) = (0.0, 0u32);

    for t in 0..cfg.total_steps {
        let eps = cfg.eps.value(t);
        let (transition, signal, next_state) = match &mut agent.behavior {
            Behavior::Lesson(exec) => {
                let model = agent.options.as_ref().expect("lesson has an option model");
                let ctx = IntraContext {
                    target: &agent.target,
                    pem: agent.pem.as_ref(),
                    count: agent.count.as_ref(),
                    actions,
                };
                let intrinsic = agent.intrinsic.as_mut().expect("lesson scores states");
                let bs = run_behavior_step(exec, model, &env, &state, &obs, &ctx, intrinsic, &mut behavior_rng)?;
                for o in [bs.initial_option, bs.next_option].into_iter().flatten() {
                    window.decisions[column_of(model.policy(o))] += 1;
                }
                window.steps[column_of(model.policy(bs.transition.option))] += 1;
                if let Some((o, len)) = bs.finished_segment {
                    *segments.entry((model.policy(o), len)).or_default() += 1;
                }
                (bs.transition, Some(bs.signal), bs.next_state)
            }
            Behavior::Baseline(actor) => {
                let learners = BaselineLearners {
                    target: &agent.target,
                    mixed: agent.mixed.as_ref(),
                    actions,
                };
                let a = actor.act(&learners, &obs, eps, &mut behavior_rng)?;
                let step = env.step(&state, Action::from_index(a))?;
                let signal: Option<IntrinsicSignal> = match &mut agent.intrinsic {
                    Some(m) => Some(m.observe(&step.obs)?),
                    None => None,
                };
                let transition = Transition {
                    obs: obs.clone(),
                    action: a,
                    option: 0,
                    extrinsic: step.reward,
                    intrinsic: signal.map_or(0.0, |s| s.normalized),
                    count_bonus: signal.map_or(0.0, |s| s.count_bonus),
                    next_obs: step.obs,
                    done: step.done,
                    option_terminated_next: false,
                };
                if step.done {
                    actor.end_episode();
                }
                (transition, signal, step.state)
            }
        };
        emit(t, Event::Behavior);
        if let Some(s) = signal {
            window.intrinsic.push(s.normalized);
            window.raw_error.push(s.raw_error);
            emit(t, Event::Intrinsic);
        }
        let done = transition.done;
        let reward = transition.extrinsic;
        window.visited.insert(transition.next_obs.index);
        heatmap.record(next_state.agent);
        obs = transition.next_obs.clone();
        buffer.push(transition);
        emit(t, Event::Push);

        ep_return += reward;
        ep_len += 1;
        state = next_state;
        if done {
            let success = reward > 0.0;
            episodes.push(EpisodeRecord {
                index: episodes.len() as u64,
                end_step: t + 1,
                ret: ep_return,
                length: ep_len,
                success,
            });
            window.returns.push(ep_return);
            window.successes += success as usize;
            (ep_return, ep_len) = (0.0, 0);
            (state, obs) = env.reset(seed)?;
            heatmap.record(state.agent);
        }

        let n = t + 1;
        if n >= cfg.learning_starts {
            let value_step = n % cfg.update_interval == 0;
            let option_step = agent.options.is_some() && n % cfg.option_update_interval == 0;
            if value_step || option_step {
                let batch = buffer.sample(cfg.batch_size, &mut replay_rng)?;
                let result = update(&mut agent, &batch, value_step, option_step, &mut window, |e| emit(t, e));
                if let Err(e) = result {
                    if let Some(dir) = out {
                        write_diagnostic(dir, n, &e, &agent, &batch, cfg)?;
                    }
                    return Err(e);
                }
            }
        }
        if n % cfg.sync_period == 0 {
            agent.sync();
            emit(t, Event::Sync);
        }
        if n % cfg.trace_interval == 0 {
            if let Some(s) = signal {
                intrinsic_trace.push((n, s.raw_error, s.normalized));
            }
        }
        if n % cfg.eval_interval == 0 {
            let eval = evaluate(&agent.target, &mut eval_env, cfg.eval_episodes, seed)?;
            let mut beta = [None; 5];
            if let Some(model) = &agent.options {
                let visited: Vec<_> = window
                    .visited
                    .iter()
                    .filter_map(|&i| env.observation_of(i))
                    .collect();
                if !visited.is_empty() {
                    let means = model.mean_betas(&visited)?;
                    for (o, &p) in model.policies().iter().enumerate() {
                        beta[column_of(p)] = Some(means[o]);
                    }
                }
            }
            rows.push(MetricsRow {
                step: n,
                episodes: episodes.len() as u64,
                train_return: mean_opt(&window.returns),
                train_success: (!window.returns.is_empty())
                    .then(|| window.successes as f64 / window.returns.len() as f64),
                eval_return_mean: eval.mean,
                eval_return_std: eval.std,
                eval_success: eval.success,
                eps: agent.options.is_none().then_some(eps),
                intrinsic_mean: mean_opt(&window.intrinsic),
                raw_error_mean: mean_opt(&window.raw_error),
                target_loss: mean_opt(&window.losses[TARGET_LOSS]),
                option_loss: mean_opt(&window.losses[OPTION_LOSS]),
                critic_loss: mean_opt(&window.losses[CRITIC_LOSS]),
                predictor_loss: mean_opt(&window.losses[PREDICTOR_LOSS]),
                beta,
                decision_freq: shares(&window.decisions, &present),
                step_freq: shares(&window.steps, &present),
            });
            window = Window::default();
            emit(t, Event::Eval);
        }
    }

    let ewc_counts = match &agent.behavior {
        Behavior::Baseline(actor) if actor.kind() == crate::baselines::BaselineKind::Ewc => {
            Some(actor.strategy_counts())
        }
        _ => None,
    };
    let summary = summarize(cfg, seed, &rows, &episodes, &present);
    let output = RunOutput {
        rows,
        episodes,
        heatmap,
        segments,
        intrinsic_trace,
        ewc_counts,
        summary,
        target: agent.target,
    };
    if let Some(dir) = out {
        write_artifacts(dir, cfg, seed, &output)?;
    }
    Ok(output)
}

/// One update block, in the order of the algorithm listing.
fn update(
    agent: &mut Agent,
    batch: &[Transition],
    value_step: bool,
    option_step: bool,
    window: &mut Window,
    mut emit: impl FnMut(Event),
) -> Result<()> {
    if value_step {
        window.losses[TARGET_LOSS].push(agent.target.update(batch)?);
        emit(Event::TargetUpdate);
        if let Some(m) = &mut agent.mixed {
            m.update(batch)?;
            emit(Event::MixedUpdate);
        }
    }
    if option_step {
        let model = agent.options.as_mut().expect("option step implies a model");
        window.losses[OPTION_LOSS].push(model.update_q_omega(batch)?);
        emit(Event::OptionValueUpdate);
        model.update_terminations(batch)?;
        emit(Event::TerminationUpdate);
    }
    if value_step {
        if let Some(m) = &mut agent.intrinsic {
            let next: Vec<_> = batch.iter().map(|t| &t.next_obs).collect();
            window.losses[PREDICTOR_LOSS].push(m.rnd.update_predictor(&next)?);
            emit(Event::PredictorUpdate);
        }
        let mut critic_loss = None;
        for c in [&mut agent.pem, &mut agent.count].into_iter().flatten() {
            critic_loss = Some(critic_loss.unwrap_or(0.0) + c.update(batch)?);
        }
        if let Some(l) = critic_loss {
            window.losses[CRITIC_LOSS].push(l);
            emit(Event::CriticUpdate);
        }
    }
    Ok(())
}

fn summarize(
    cfg: &RunConfig,
    seed: u64,
    rows: &[MetricsRow],
    episodes: &[EpisodeRecord],
    present: &[bool; 5],
) -> RunSummary {
    let total = cfg.total_steps;
    let tail_start = total - total / 10;
    let tail: Vec<&EpisodeRecord> = episodes.iter().filter(|e| e.end_step > tail_start).collect();
    let beta_window = |keep: &dyn Fn(u64) -> bool| {
        let mut out = BTreeMap::new();
        for (i, &p) in POLICY_COLUMNS.iter().enumerate() {
            if !present[i] {
                continue;
            }
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| keep(r.step))
                .filter_map(|r| r.beta[i])
                .collect();
            if let Some(m) = mean_opt(&vals) {
                out.insert(p.name().to_string(), m);
            }
        }
        out
    };
    let evals: Vec<f64> = rows.iter().map(|r| r.eval_return_mean).collect();
    RunSummary {
        name: cfg.name.clone(),
        agent: cfg.agent,
        seed,
        total_steps: total,
        episodes: episodes.len() as u64,
        auc: mean_opt(&evals).unwrap_or(0.0),
        final_eval_return: rows.last().map(|r| r.eval_return_mean),
        final_eval_success: rows.last().map(|r| r.eval_success),
        train_success_last_tenth: (!tail.is_empty())
            .then(|| tail.iter().filter(|e| e.success).count() as f64 / tail.len() as f64),
        beta_first_tenth: beta_window(&|s| s <= total / 10),
        beta_last_tenth: beta_window(&|s| s > tail_start),
    }
}

fn write_diagnostic(dir: &Path, step: u64, err: &Error, agent: &Agent, batch: &[Transition], cfg: &RunConfig) -> Result<()> {
    let diag = Diagnostic {
        step,
        error: err.to_string(),
        param_norms: agent.param_norms(),
        batch: batch
            .iter()
            .map(|t| DiagnosticSample {
                state: t.obs.index,
                action: t.action,
                option: t.option,
                extrinsic: t.extrinsic,
                intrinsic: t.intrinsic,
                next_state: t.next_obs.index,
                done: t.done,
            })
            .collect(),
        config: cfg,
    };
    write_atomic(&dir.join("diagnostic.json"), serde_json::to_string_pretty(&diag)?.as_bytes())
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    bytes: usize,
    fnv1a: String,
}

fn write_artifacts(dir: &Path, cfg: &RunConfig, seed: u64, run: &RunOutput) -> Result<()> {
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    let resolved = RunConfig {
        seeds: vec![seed],
        ..cfg.clone()
    };
    files.push(("config.json", resolved.to_json().into_bytes()));
    files.push(("metrics.csv", metrics_csv(&run.rows)?));
    files.push((
        "episodes.csv",
        csv_bytes(
            &["episode", "end_step", "return", "length", "success"],
            run.episodes.iter().map(|e| {
                vec![
                    e.index.to_string(),
                    e.end_step.to_string(),
                    e.ret.to_string(),
                    e.length.to_string(),
                    (e.success as u8).to_string(),
                ]
            }),
        )?,
    ));
    let mut heat = Vec::new();
    run.heatmap.write_csv(&mut heat)?;
    files.push(("heatmap.csv", heat));
    files.push((
        "intrinsic.csv",
        csv_bytes(
            &["step", "raw_error", "intrinsic"],
            run.intrinsic_trace
                .iter()
                .map(|(s, r, i)| vec![s.to_string(), r.to_string(), i.to_string()]),
        )?,
    ));
    files.push((
        "segments.csv",
        csv_bytes(
            &["option", "length", "count"],
            run.segments
                .iter()
                .map(|((p, len), c)| vec![p.name().to_string(), len.to_string(), c.to_string()]),
        )?,
    ));
    if let Some(counts) = run.ewc_counts {
        files.push((
            "ewc.csv",
            csv_bytes(
                &["strategy", "count"],
                ["eps", "epsz", "epsr", "rnd"]
                    .iter()
                    .zip(counts)
                    .map(|(s, c)| vec![s.to_string(), c.to_string()]),
            )?,
        ));
    }
    files.push(("summary.json", serde_json::to_string_pretty(&run.summary)?.into_bytes()));
    files.push(("q_target.json", serde_json::to_string(run.target.q())?.into_bytes()));

    let manifest: Vec<ManifestEntry> = files
        .iter()
        .map(|(name, bytes)| ManifestEntry {
            file: name.to_string(),
            bytes: bytes.len(),
            fnv1a: format!("{:016x}", fnv1a(bytes)),
        })
        .collect();
    for (name, bytes) in &files {
        write_atomic(&dir.join(name), bytes)?;
    }
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
}
