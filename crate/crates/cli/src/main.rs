use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lesson_core::harness::{self, AgentKind, RunConfig, OUT_DIR_ENV};
use lesson_core::{GridWorld, Task};

#[derive(Parser)]
#[command(name = "lesson", version, about = "Train, sweep and report option-based exploration runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed and write its artifacts.
    Train {
        /// JSON run config; the desk profile when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (defaults to $LESSON_OUT_DIR, then the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's agent.
        #[arg(long)]
        agent: Option<String>,
        /// Override the config's step budget.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Train many seeds in parallel and aggregate them.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed range `a..b` (end exclusive), `a..=b`, or a comma list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Comma-separated agents to compare, each run under its own name.
        #[arg(long)]
        agents: Option<String>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate finished runs into report.csv and gnuplot .dat files.
    Report {
        #[arg(long)]
        runs: PathBuf,
        /// Moving-average window, in checkpoints.
        #[arg(long, default_value_t = harness::DEFAULT_SMOOTHING)]
        smoothing: usize,
    },
    /// Print an environment layout.
    Render {
        #[arg(long, default_value = "empty-8x8")]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a profile's config as JSON.
    Config {
        #[arg(long, value_enum, default_value_t = Profile::Desk)]
        profile: Profile,
    },
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let num = |s: &str| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`"));
    if let Some((a, b)) = spec.split_once("..=") {
        return Ok((num(a)?..=num(b)?).collect());
    }
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a >= b {
            bail!("empty seed range `{spec}`");
        }
        return Ok((a..b).collect());
    }
    spec.split(',').map(num).collect()
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::desk()),
    }
}

/// `--out`, then the environment override, then the config.
fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output_dir.clone())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out, agent, steps } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(a) = agent {
                cfg.agent = a.parse()?;
                cfg.name = cfg.agent.name().to_string();
            }
            if let Some(s) = steps {
                cfg.total_steps = s;
            }
            let dir = output_dir(out, &cfg);
            let run = harness::train(&cfg, seed, Some(&dir))?;
            let s = &run.summary;
            println!(
                "{} seed {}: auc {:.4}, final eval return {}, final eval success {}, episodes {}",
                s.name,
                s.seed,
                s.auc,
                s.final_eval_return.map_or("-".into(), |x| format!("{x:.4}")),
                s.final_eval_success.map_or("-".into(), |x| format!("{x:.2}")),
                s.episodes
            );
            println!("artifacts in {}", dir.display());
        }
        Command::Sweep { config, seeds, jobs, agents, steps, out } => {
            let mut base = load_config(config.as_deref())?;
            if let Some(s) = seeds {
                base.seeds = parse_seeds(&s)?;
            }
            if let Some(s) = steps {
                base.total_steps = s;
            }
            let configs: Vec<RunConfig> = match agents {
                Some(list) => list
                    .split(',')
                    .map(|a| {
                        let kind: AgentKind = a.trim().parse()?;
                        Ok(base.with_agent(kind.name(), kind))
                    })
                    .collect::<Result<_>>()?,
                None => vec![base.clone()],
            };
            let dir = output_dir(out, &base);
            let report = harness::sweep(&configs, jobs, Some(&dir))?;
            for agg in &report.aggregates {
                let final_success = agg.eval_success_mean.last().copied().unwrap_or(0.0);
                println!(
                    "{:<14} seeds {:>3}  auc {:>8.4} ± {:<8.4} final eval success {:.2}",
                    agg.config, agg.seeds, agg.auc_mean, agg.auc_std, final_success
                );
            }
            let failures = report.failures();
            for f in &failures {
                eprintln!("failed: {} seed {}: {}", f.config, f.seed, f.outcome.as_ref().unwrap_err());
            }
            println!("results in {}", dir.display());
            if !failures.is_empty() {
                bail!("{} run(s) failed", failures.len());
            }
        }
        Command::Report { runs, smoothing } => {
            let aggs = harness::report(&runs, smoothing)?;
            if aggs.is_empty() {
                bail!("no runs found under {}", runs.display());
            }
            for agg in &aggs {
                println!("{:<14} seeds {:>3}  auc {:>8.4} ± {:.4}", agg.config, agg.seeds, agg.auc_mean, agg.auc_std);
            }
            println!("wrote {}", runs.join("report.csv").display());
        }
        Command::Render { env, seed } => {
            let task: Task = env.parse()?;
            let world = GridWorld::new(task, seed)?;
            print!("{}", world.render(&world.initial_state()));
        }
        Command::Config { profile } => {
            let cfg = match profile {
                Profile::Desk => RunConfig::desk(),
                Profile::Full => RunConfig::full(),
            };
            println!("{}", cfg.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("5,1").unwrap(), vec![5, 1]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
