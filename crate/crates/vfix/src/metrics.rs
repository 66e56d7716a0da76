//! Fix rate, unbiased pass@k, iteration histograms, and report aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::RepairSession;
use crate::config::{ConfigEcho, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("fix rate needs at least one problem")]
    EmptyStats,
    #[error("pass@k usage error: {0}")]
    BadArguments(String),
    #[error("cannot aggregate: no reports given")]
    NoReports,
    #[error("cannot aggregate: config mismatch between runs ({0})")]
    ConfigMismatch(String),
    #[error("trial stats invariant violated for {task_id}: {reason}")]
    BadStats { task_id: String, reason: String },
    #[error("cannot read report {path}: {reason}")]
    BadReport { path: String, reason: String },
}

/// Per-problem success counts: `c` fixed samples out of `n` attempted;
/// `iterations` holds the iteration count of each fixed sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialStats {
    pub task_id: String,
    pub n: u32,
    pub c: u32,
    pub iterations: Vec<u32>,
}

impl TrialStats {
    pub fn new(
        task_id: impl Into<String>,
        n: u32,
        c: u32,
        iterations: Vec<u32>,
    ) -> Result<Self, MetricsError> {
        let task_id = task_id.into();
        if n == 0 {
            return Err(MetricsError::BadStats {
                task_id,
                reason: "n must be positive".into(),
            });
        }
        if c > n {
            return Err(MetricsError::BadStats {
                task_id,
                reason: format!("c={c} exceeds n={n}"),
            });
        }
        if iterations.len() != c as usize {
            return Err(MetricsError::BadStats {
                task_id,
                reason: format!("{} iteration entries for c={c}", iterations.len()),
            });
        }
        Ok(TrialStats {
            task_id,
            n,
            c,
            iterations,
        })
    }
}

/// Mean over problems of c/n. Problems weigh equally regardless of n.
pub fn fix_rate(stats: &[TrialStats]) -> Result<f64, MetricsError> {
    if stats.is_empty() {
        return Err(MetricsError::EmptyStats);
    }
    let sum: f64 = stats.iter().map(|s| s.c as f64 / s.n as f64).sum();
    Ok(sum / stats.len() as f64)
}

/// Unbiased pass@k estimator: 1 − C(n−c, k)/C(n, k), computed as a running
/// product so large n never overflows. Short-circuits to 1 when fewer than
/// k samples failed.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::BadArguments("k must be positive".into()));
    }
    if k > n {
        return Err(MetricsError::BadArguments(format!("k={k} exceeds n={n}")));
    }
    if c > n {
        return Err(MetricsError::BadArguments(format!("c={c} exceeds n={n}")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c, k)/C(n, k) = prod_{i=0..k-1} (n-c-i)/(n-i)
    let mut ratio = 1.0f64;
    for i in 0..k {
        ratio *= (n - c - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - ratio)
}

/// Iteration counts over fixed sessions only.
pub fn iteration_histogram(sessions: &[RepairSession]) -> BTreeMap<u32, u64> {
    let mut hist = BTreeMap::new();
    for s in sessions {
        if s.outcome.fixed {
            *hist.entry(s.outcome.iterations_used).or_insert(0) += 1;
        }
    }
    hist
}

fn histogram_from_stats(stats: &[TrialStats]) -> BTreeMap<u32, u64> {
    let mut hist = BTreeMap::new();
    for s in stats {
        for &it in &s.iterations {
            *hist.entry(it).or_insert(0) += 1;
        }
    }
    hist
}

/// Aggregated evaluation report for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub format_version: u32,
    pub config: ConfigEcho,
    pub fix_rate: f64,
    pub pass_at_k: BTreeMap<u32, f64>,
    pub iteration_histogram: BTreeMap<u32, u64>,
    pub per_problem: Vec<TrialStats>,
    /// Sessions that ended on a backend or format failure; always unfixed.
    #[serde(default)]
    pub aborted_sessions: u64,
}

/// Assemble a report from per-problem stats. `per_problem` is canonicalized
/// by task id; pass@k is computed for every requested k that fits n.
pub fn build_report(
    config: ConfigEcho,
    mut per_problem: Vec<TrialStats>,
    pass_ks: &[u32],
    aborted_sessions: u64,
) -> Result<MetricReport, MetricsError> {
    per_problem.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let rate = fix_rate(&per_problem)?;
    let mut pass = BTreeMap::new();
    for &k in pass_ks {
        if per_problem.iter().all(|s| u64::from(k) <= u64::from(s.n)) {
            let mean: f64 = per_problem
                .iter()
                .map(|s| pass_at_k(s.n.into(), s.c.into(), k.into()).unwrap_or(0.0))
                .sum::<f64>()
                / per_problem.len() as f64;
            pass.insert(k, mean);
        }
    }
    Ok(MetricReport {
        format_version: FORMAT_VERSION,
        config,
        fix_rate: rate,
        pass_at_k: pass,
        iteration_histogram: histogram_from_stats(&per_problem),
        per_problem,
        aborted_sessions,
    })
}

/// Merge repeated runs of the same configuration: per-problem counts
/// accumulate, then every metric is recomputed from the merged counts.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::NoReports)?;
    for r in reports.iter().skip(1) {
        if r.config.semantics() != first.config.semantics() {
            return Err(MetricsError::ConfigMismatch(format!(
                "{:?} vs {:?}",
                first.config.semantics(),
                r.config.semantics()
            )));
        }
    }
    let mut merged: BTreeMap<String, TrialStats> = BTreeMap::new();
    let mut aborted = 0;
    for r in reports {
        aborted += r.aborted_sessions;
        for s in &r.per_problem {
            match merged.get_mut(&s.task_id) {
                None => {
                    merged.insert(s.task_id.clone(), s.clone());
                }
                Some(acc) => {
                    acc.n += s.n;
                    acc.c += s.c;
                    acc.iterations.extend_from_slice(&s.iterations);
                }
            }
        }
    }
    let ks: Vec<u32> = first.pass_at_k.keys().copied().collect();
    build_report(
        first.config.clone(),
        merged.into_values().collect(),
        &ks,
        aborted,
    )
}

/// Read `report.json` from each run directory and merge them.
pub fn aggregate_run_dirs(dirs: &[impl AsRef<Path>]) -> Result<MetricReport, MetricsError> {
    let mut reports = Vec::new();
    for dir in dirs {
        let path = dir.as_ref().join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| MetricsError::BadReport {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let report: MetricReport =
            serde_json::from_str(&text).map_err(|e| MetricsError::BadReport {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        reports.push(report);
    }
    aggregate(&reports)
}

/// Plain-text summary: one row per configuration, in the shape
/// mode × feedback × rag → fix rate.
pub fn render_summary_table(reports: &[&MetricReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:<10} {:<6} {:<10} {:>8} {:>8}\n",
        "mode", "feedback", "rag", "toolchain", "fixrate", "pass@1"
    ));
    out.push_str(&"-".repeat(56));
    out.push('\n');
    for r in reports {
        let pass1 = r
            .pass_at_k
            .get(&1)
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{:<10} {:<10} {:<6} {:<10} {:>8.3} {:>8}\n",
            r.config.mode.to_string(),
            r.config.feedback.to_string(),
            if r.config.rag { "on" } else { "off" },
            r.config.toolchain.to_string(),
            r.fix_rate,
            pass1,
        ));
    }
    out
}
