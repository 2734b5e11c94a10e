use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::metrics::{csv_bytes, read_columns, write_atomic, MetricsRow};
use super::run::{train, RunSummary};
use crate::error::{Error, Result};
use crate::util::{mean, std_dev};

/// Per-checkpoint series of one seed, the part of a metrics file that the
/// aggregate needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedSeries {
    pub step: Vec<u64>,
    pub eval_return: Vec<f64>,
    pub eval_success: Vec<f64>,
    pub train_success: Vec<Option<f64>>,
}

impl SeedSeries {
    pub fn from_rows(rows: &[MetricsRow]) -> Self {
        SeedSeries {
            step: rows.iter().map(|r| r.step).collect(),
            eval_return: rows.iter().map(|r| r.eval_return_mean).collect(),
            eval_success: rows.iter().map(|r| r.eval_success).collect(),
            train_success: rows.iter().map(|r| r.train_success).collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let cols = read_columns(path)?;
        let get = |name: &str| {
            cols.iter()
                .find(|(c, _)| c == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::InvalidConfig(format!("{}: no column {name}", path.display())))
        };
        let required = |name: &str| -> Result<Vec<f64>> {
            get(name)?
                .into_iter()
                .map(|v| v.ok_or_else(|| Error::InvalidConfig(format!("{}: empty {name}", path.display()))))
                .collect()
        };
        Ok(SeedSeries {
            step: required("step")?.into_iter().map(|s| s as u64).collect(),
            eval_return: required("eval_return_mean")?,
            eval_success: required("eval_success")?,
            train_success: get("train_success")?,
        })
    }

    /// Mean evaluation return over checkpoints.
    pub fn auc(&self) -> f64 {
        if self.eval_return.is_empty() {
            0.0
        } else {
            mean(&self.eval_return)
        }
    }
}

/// Across-seed statistics for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub config: String,
    pub seeds: usize,
    pub step: Vec<u64>,
    pub eval_return_mean: Vec<f64>,
    pub eval_return_std: Vec<f64>,
    pub eval_success_mean: Vec<f64>,
    pub train_success_mean: Vec<Option<f64>>,
    pub auc_mean: f64,
    pub auc_std: f64,
}

impl Aggregate {
    /// Checkpoints are aligned by position; seeds with fewer checkpoints
    /// (a shorter run) truncate the aggregate.
    pub fn from_series(config: &str, series: &[SeedSeries]) -> Self {
        let len = series.iter().map(|s| s.step.len()).min().unwrap_or(0);
        let column = |f: &dyn Fn(&SeedSeries, usize) -> f64, i: usize| -> Vec<f64> {
            series.iter().map(|s| f(s, i)).collect()
        };
        let mut agg = Aggregate {
            config: config.to_string(),
            seeds: series.len(),
            step: series.first().map(|s| s.step[..len].to_vec()).unwrap_or_default(),
            eval_return_mean: Vec::with_capacity(len),
            eval_return_std: Vec::with_capacity(len),
            eval_success_mean: Vec::with_capacity(len),
            train_success_mean: Vec::with_capacity(len),
            auc_mean: 0.0,
            auc_std: 0.0,
        };
        for i in 0..len {
            let ret = column(&|s, i| s.eval_return[i], i);
            agg.eval_return_mean.push(mean(&ret));
            agg.eval_return_std.push(std_dev(&ret));
            agg.eval_success_mean.push(mean(&column(&|s, i| s.eval_success[i], i)));
            let train: Vec<f64> = series.iter().filter_map(|s| s.train_success[i]).collect();
            agg.train_success_mean.push((!train.is_empty()).then(|| mean(&train)));
        }
        let aucs: Vec<f64> = series.iter().map(SeedSeries::auc).collect();
        if !aucs.is_empty() {
            agg.auc_mean = mean(&aucs);
            agg.auc_std = std_dev(&aucs);
        }
        agg
    }

    /// Trailing moving average of the mean evaluation return.
    pub fn smoothed_return(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        (0..self.eval_return_mean.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(w);
                mean(&self.eval_return_mean[lo..=i])
            })
            .collect()
    }

    fn rows(&self, window: usize) -> Vec<Vec<String>> {
        let smooth = self.smoothed_return(window);
        (0..self.step.len())
            .map(|i| {
                vec![
                    self.config.clone(),
                    self.step[i].to_string(),
                    self.eval_return_mean[i].to_string(),
                    self.eval_return_std[i].to_string(),
                    smooth[i].to_string(),
                    self.eval_success_mean[i].to_string(),
                    self.train_success_mean[i].map(|x| x.to_string()).unwrap_or_default(),
                    self.seeds.to_string(),
                ]
            })
            .collect()
    }
}

const AGGREGATE_HEADER: [&str; 8] = [
    "config",
    "step",
    "eval_return_mean",
    "eval_return_std",
    "eval_return_smooth",
    "eval_success_mean",
    "train_success_mean",
    "seeds",
];

/// Moving-average window (in checkpoints) used for the smoothed column.
pub const DEFAULT_SMOOTHING: usize = 5;

/// One `(config, seed)` run of a sweep. Failures keep their error text.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub config: String,
    pub seed: u64,
    pub outcome: std::result::Result<(RunSummary, SeedSeries), String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepReport {
    pub fn aggregate(&self, config: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.config == config)
    }

    pub fn summaries(&self, config: &str) -> Vec<&RunSummary> {
        self.runs
            .iter()
            .filter(|r| r.config == config)
            .filter_map(|r| r.outcome.as_ref().ok().map(|(s, _)| s))
            .collect()
    }

    pub fn failures(&self) -> Vec<&SweepRun> {
        self.runs.iter().filter(|r| r.outcome.is_err()).collect()
    }
}

fn run_dir(root: &Path, config: &str, seed: u64) -> PathBuf {
    root.join(config).join(format!("seed-{seed}"))
}

#[derive(Serialize)]
struct ManifestRun<'a> {
    config: &'a str,
    seed: u64,
    dir: Option<String>,
    status: &'a str,
    error: Option<&'a str>,
    auc: Option<f64>,
}

/// Runs every `(config, seed)` pair on a pool of `jobs` threads. Each run
/// is sequential and independent; results come back in input order.
pub fn sweep(configs: &[RunConfig], jobs: usize, out_root: Option<&Path>) -> Result<SweepReport> {
    let mut names = std::collections::BTreeSet::new();
    for cfg in configs {
        cfg.validate()?;
        if !names.insert(cfg.name.as_str()) {
            return Err(Error::InvalidConfig(format!("duplicate config name `{}`", cfg.name)));
        }
    }
    let pairs: Vec<(&RunConfig, u64)> = configs
        .iter()
        .flat_map(|c| c.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let runs: Vec<SweepRun> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(cfg, seed)| {
                let dir = out_root.map(|r| run_dir(r, &cfg.name, seed));
                let outcome = train(cfg, seed, dir.as_deref())
                    .map(|out| (out.summary, SeedSeries::from_rows(&out.rows)))
                    .map_err(|e| e.to_string());
                SweepRun {
                    config: cfg.name.clone(),
                    seed,
                    outcome,
                }
            })
            .collect()
    });
    let aggregates: Vec<Aggregate> = configs
        .iter()
        .map(|cfg| {
            let series: Vec<SeedSeries> = runs
                .iter()
                .filter(|r| r.config == cfg.name)
                .filter_map(|r| r.outcome.as_ref().ok().map(|(_, s)| s.clone()))
                .collect();
            Aggregate::from_series(&cfg.name, &series)
        })
        .collect();
    let report = SweepReport { runs, aggregates };
    if let Some(root) = out_root {
        write_sweep_outputs(root, &report)?;
    }
    Ok(report)
}

fn write_sweep_outputs(root: &Path, report: &SweepReport) -> Result<()> {
    for agg in &report.aggregates {
        write_atomic(
            &root.join(&agg.config).join("aggregate.csv"),
            &csv_bytes(&AGGREGATE_HEADER, agg.rows(DEFAULT_SMOOTHING))?,
        )?;
        let seeds = report.runs.iter().filter(|r| r.config == agg.config).map(|r| match &r.outcome {
            Ok((s, _)) => vec![
                r.seed.to_string(),
                "ok".into(),
                s.auc.to_string(),
                s.final_eval_success.map(|x| x.to_string()).unwrap_or_default(),
                s.train_success_last_tenth.map(|x| x.to_string()).unwrap_or_default(),
            ],
            Err(_) => vec![r.seed.to_string(), "failed".into(), String::new(), String::new(), String::new()],
        });
        write_atomic(
            &root.join(&agg.config).join("seeds.csv"),
            &csv_bytes(&["seed", "status", "auc", "final_eval_success", "train_success_last_tenth"], seeds)?,
        )?;
    }
    let manifest: Vec<ManifestRun<'_>> = report
        .runs
        .iter()
        .map(|r| ManifestRun {
            config: &r.config,
            seed: r.seed,
            dir: r
                .outcome
                .is_ok()
                .then(|| format!("{}/seed-{}", r.config, r.seed)),
            status: if r.outcome.is_ok() { "ok" } else { "failed" },
            error: r.outcome.as_ref().err().map(String::as_str),
            auc: r.outcome.as_ref().ok().map(|(s, _)| s.auc),
        })
        .collect();
    write_atomic(&root.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

/// Re-aggregates finished runs under `runs_dir` (laid out as
/// `<config>/seed-<n>/metrics.csv`). Writes `report.csv` at the top level
/// and a whitespace-separated `report.dat` per config for gnuplot.
pub fn report(runs_dir: &Path, smoothing: usize) -> Result<Vec<Aggregate>> {
    let mut aggregates = Vec::new();
    for config_dir in sorted_dirs(runs_dir)? {
        let mut series = Vec::new();
        for seed_dir in sorted_dirs(&config_dir)? {
            let metrics = seed_dir.join("metrics.csv");
            if metrics.is_file() {
                series.push(SeedSeries::read(&metrics)?);
            }
        }
        if series.is_empty() {
            continue;
        }
        let name = config_dir.file_name().expect("dir name").to_string_lossy().into_owned();
        let agg = Aggregate::from_series(&name, &series);
        let mut dat = String::from("# step eval_return_mean eval_return_std eval_return_smooth eval_success_mean\n");
        let smooth = agg.smoothed_return(smoothing);
        for i in 0..agg.step.len() {
            dat.push_str(&format!(
                "{} {} {} {} {}\n",
                agg.step[i], agg.eval_return_mean[i], agg.eval_return_std[i], smooth[i], agg.eval_success_mean[i]
            ));
        }
        write_atomic(&config_dir.join("report.dat"), dat.as_bytes())?;
        aggregates.push(agg);
    }
    let rows = aggregates.iter().flat_map(|a| a.rows(smoothing));
    write_atomic(&runs_dir.join("report.csv"), &csv_bytes(&AGGREGATE_HEADER, rows)?)?;
    Ok(aggregates)
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::EpsSchedule;
    use crate::funcapprox::OptimizerConfig;
    use crate::harness::config::{AgentKind, EnvRef};

    fn small(name: &str, agent: AgentKind, seeds: Vec<u64>) -> RunConfig {
        RunConfig {
            name: name.into(),
            env: EnvRef::Id("empty-5x5".into()),
            agent,
            seeds,
            total_steps: 1_500,
            learning_starts: 100,
            eval_interval: 500,
            eval_episodes: 2,
            ..RunConfig::desk()
        }
    }

    fn diverging(name: &str) -> RunConfig {
        RunConfig {
            learning_starts: 0,
            eps: EpsSchedule::constant(1.0),
            total_steps: 20_000,
            target_optimizer: OptimizerConfig::Sgd { lr: 1e300 },
            ..small(name, AgentKind::EpsGreedy, vec![0])
        }
    }

    #[test]
    fn single_seed_aggregate_has_zero_spread() {
        let report = sweep(&[small("one", AgentKind::Lesson, vec![3])], 1, None).unwrap();
        let agg = report.aggregate("one").unwrap();
        assert_eq!((agg.seeds, agg.step.clone()), (1, vec![500, 1000, 1500]));
        assert!(agg.eval_return_std.iter().all(|&s| s == 0.0));
        assert_eq!(agg.auc_std, 0.0);
        assert_eq!(report.summaries("one").len(), 1);
    }

    #[test]
    fn repeated_seed_reproduces_itself() {
        let report = sweep(&[small("twin", AgentKind::EpszGreedy, vec![7, 7])], 2, None).unwrap();
        let agg = report.aggregate("twin").unwrap();
        assert_eq!(agg.seeds, 2);
        assert!(agg.eval_return_std.iter().all(|&s| s == 0.0));
        let s = report.summaries("twin");
        assert_eq!(s[0], s[1]);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let cfgs = [
            small("a", AgentKind::Lesson, vec![0, 1]),
            small("b", AgentKind::Ewc, vec![0, 1]),
        ];
        let one = sweep(&cfgs, 1, None).unwrap();
        let four = sweep(&cfgs, 4, None).unwrap();
        assert_eq!(one.aggregates, four.aggregates);
    }

    #[test]
    fn failed_seed_is_reported_and_others_survive() {
        let dir = tempfile::tempdir().unwrap();
        let cfgs = [small("fine", AgentKind::EpsGreedy, vec![0]), diverging("broken")];
        let report = sweep(&cfgs, 2, Some(dir.path())).unwrap();
        let failures = report.failures();
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].config, "broken");
        assert_eq!(report.aggregate("broken").unwrap().seeds, 0);
        assert_eq!(report.aggregate("fine").unwrap().seeds, 1);
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        let statuses: Vec<&str> = manifest.as_array().unwrap().iter().map(|r| r["status"].as_str().unwrap()).collect();
        assert_eq!(statuses, ["ok", "failed"]);
        assert!(dir.path().join("broken/seed-0/diagnostic.json").is_file());
        let seeds = fs::read_to_string(dir.path().join("broken/seeds.csv")).unwrap();
        assert!(seeds.contains("0,failed"));
    }

    #[test]
    fn report_reaggregates_written_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfgs = [
            small("lesson", AgentKind::Lesson, vec![0, 1]),
            small("eps", AgentKind::EpsGreedy, vec![0]),
        ];
        let swept = sweep(&cfgs, 2, Some(dir.path())).unwrap();
        let reported = report(dir.path(), DEFAULT_SMOOTHING).unwrap();
        // Directories are visited in name order.
        assert_eq!(reported[0], *swept.aggregate("eps").unwrap());
        assert_eq!(reported[1], *swept.aggregate("lesson").unwrap());
        let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 3 + 3);
        let dat = fs::read_to_string(dir.path().join("lesson/report.dat")).unwrap();
        assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), 3);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let cfgs = [small("x", AgentKind::Lesson, vec![0]), small("x", AgentKind::Rnd, vec![0])];
        assert!(sweep(&cfgs, 1, None).is_err());
    }

    #[test]
    fn smoothing_is_a_trailing_mean() {
        let series = SeedSeries {
            step: vec![1, 2, 3, 4],
            eval_return: vec![0.0, 2.0, 4.0, 6.0],
            eval_success: vec![0.0; 4],
            train_success: vec![None; 4],
        };
        let agg = Aggregate::from_series("s", &[series]);
        assert_eq!(agg.smoothed_return(2), vec![0.0, 1.0, 3.0, 5.0]);
        assert_eq!(agg.smoothed_return(1), agg.eval_return_mean);
        assert_eq!(agg.auc_mean, 3.0);
    }
}
