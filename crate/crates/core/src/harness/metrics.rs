use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::options::IntraPolicy;

/// Every intra-policy gets a column group whether or not a run uses it, so
/// all agents share one schema.
pub const POLICY_COLUMNS: [IntraPolicy; 5] = [
    IntraPolicy::Greedy,
    IntraPolicy::Random,
    IntraPolicy::TeRandom,
    IntraPolicy::Pem,
    IntraPolicy::Count,
];

/// One evaluation checkpoint. Window quantities cover the steps since the
/// previous checkpoint; `None` is written as an empty field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRow {
    pub step: u64,
    /// Training episodes finished so far.
    pub episodes: u64,
    /// Mean undiscounted extrinsic return of training episodes in the window.
    pub train_return: Option<f64>,
    pub train_success: Option<f64>,
    /// Greedy target-policy evaluation.
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub eval_success: f64,
    pub eps: Option<f64>,
    pub intrinsic_mean: Option<f64>,
    pub raw_error_mean: Option<f64>,
    pub target_loss: Option<f64>,
    pub option_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub predictor_loss: Option<f64>,
    /// Mean termination probability over states visited in the window.
    pub beta: [Option<f64>; 5],
    /// Share of option choices in the window.
    pub decision_freq: [Option<f64>; 5],
    /// Share of environment steps executed by each option in the window.
    pub step_freq: [Option<f64>; 5],
}

fn column(p: IntraPolicy) -> String {
    p.name().replace('-', "_")
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

impl MetricsRow {
    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = [
            "step",
            "episodes",
            "train_return",
            "train_success",
            "eval_return_mean",
            "eval_return_std",
            "eval_success",
            "eps",
            "intrinsic_mean",
            "raw_error_mean",
            "target_loss",
            "option_loss",
            "critic_loss",
            "predictor_loss",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for prefix in ["beta", "decision_freq", "step_freq"] {
            h.extend(POLICY_COLUMNS.iter().map(|&p| format!("{prefix}_{}", column(p))));
        }
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.step.to_string(),
            self.episodes.to_string(),
            fmt_opt(self.train_return),
            fmt_opt(self.train_success),
            fmt(self.eval_return_mean),
            fmt(self.eval_return_std),
            fmt(self.eval_success),
            fmt_opt(self.eps),
            fmt_opt(self.intrinsic_mean),
            fmt_opt(self.raw_error_mean),
            fmt_opt(self.target_loss),
            fmt_opt(self.option_loss),
            fmt_opt(self.critic_loss),
            fmt_opt(self.predictor_loss),
        ];
        for group in [&self.beta, &self.decision_freq, &self.step_freq] {
            r.extend(group.iter().map(|&x| fmt_opt(x)));
        }
        r
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MetricsRow::header())?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

/// Builds a CSV in memory from a header and string rows.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

/// Writes through a temporary sibling and renames it into place, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// 64-bit FNV-1a, used for content digests in manifests.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Reads a metrics file back as named columns of optional floats.
pub fn read_columns(path: &Path) -> Result<Vec<(String, Vec<Option<f64>>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec?;
        for (i, field) in rec.iter().enumerate() {
            let v = if field.is_empty() {
                None
            } else {
                Some(field.parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("{}: bad number `{field}`", path.display()))
                })?)
            };
            cols[i].push(v);
        }
    }
    Ok(names.into_iter().zip(cols).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_record_align() {
        let row = MetricsRow {
            step: 10,
            beta: [Some(0.5), None, None, None, None],
            ..Default::default()
        };
        let h = MetricsRow::header();
        let r = row.record();
        assert_eq!(h.len(), r.len());
        assert_eq!(h.len(), 14 + 15);
        let i = h.iter().position(|c| c == "beta_greedy").unwrap();
        assert_eq!(r[i], "0.5");
        assert_eq!(r[i + 1], "");
        assert!(h.contains(&"step_freq_te_random".to_string()));
    }

    #[test]
    fn csv_round_trip_and_atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            MetricsRow { step: 1, eval_return_mean: 0.1 + 0.2, ..Default::default() },
            MetricsRow { step: 2, train_return: Some(-3.5), ..Default::default() },
        ];
        let path = dir.path().join("m.csv");
        write_atomic(&path, &metrics_csv(&rows).unwrap()).unwrap();
        assert!(!dir.path().join("m.csv.tmp").exists());
        let cols = read_columns(&path).unwrap();
        let get = |n: &str| cols.iter().find(|(c, _)| c == n).unwrap().1.clone();
        assert_eq!(get("step"), vec![Some(1.0), Some(2.0)]);
        assert_eq!(get("eval_return_mean")[0], Some(0.1 + 0.2));
        assert_eq!(get("train_return"), vec![None, Some(-3.5)]);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
