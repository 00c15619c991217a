//! Episode metrics: average scheduling delay (ASD), task completion rate
//! (TCR), throughput (TP), normalized resource cost (RC) and the discounted
//! return.
//!
//! Units: ASD in sim-seconds of queue wait (start - release), TCR in percent,
//! TP in completed tasks per 100 sim-seconds of makespan, RC dimensionless.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::TaskStatus;
use crate::error::{Error, Result};

/// Throughput is reported per this many sim-seconds.
pub const TP_WINDOW: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: usize,
    pub status: TaskStatus,
    pub release: Option<f64>,
    pub start: Option<f64>,
    pub finish: Option<f64>,
    pub node: Option<usize>,
    pub success: bool,
    pub latency: f64,
    pub cost: f64,
    /// min(cost / c_max, 1)
    pub cost_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub tasks: Vec<TaskRecord>,
    /// Reward per decision step.
    pub rewards: Vec<f64>,
    pub horizon: f64,
    /// Final simulated time of the episode.
    pub makespan: f64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub asd: f64,
    pub tcr: f64,
    pub tp: f64,
    pub rc: f64,
    pub cum_reward: f64,
    pub completed: usize,
    pub makespan: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub asd: f64,
    pub tcr: f64,
    pub tp: f64,
    pub rc: f64,
    pub avg_cum_reward: f64,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Identifies the run configuration; reports compared side by side should
    /// agree on it.
    #[serde(default)]
    pub config_fingerprint: String,
}

/// Σ γ^t r_t with t the decision-step index.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for &r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

pub fn episode_metrics(trace: &EpisodeTrace, gamma: f64) -> EpisodeMetrics {
    let n = trace.tasks.len();
    let mut wait_sum = 0.0;
    let mut started = 0usize;
    let mut successes = 0usize;
    let mut completed = 0usize;
    let mut cost_sum = 0.0;
    for t in &trace.tasks {
        if let (Some(start), Some(release)) = (t.start, t.release) {
            wait_sum += start - release;
            started += 1;
        }
        if t.success {
            successes += 1;
        }
        if t.finish.is_some() {
            completed += 1;
            cost_sum += t.cost_norm;
        }
    }
    let asd = if started > 0 { wait_sum / started as f64 } else { 0.0 };
    let tcr = if n > 0 { 100.0 * successes as f64 / n as f64 } else { 0.0 };
    let tp = if trace.makespan > 0.0 {
        TP_WINDOW * completed as f64 / trace.makespan
    } else {
        0.0
    };
    let rc = if completed > 0 { cost_sum / completed as f64 } else { 0.0 };
    EpisodeMetrics {
        asd,
        tcr,
        tp,
        rc,
        cum_reward: discounted_return(&trace.rewards, gamma),
        completed,
        makespan: trace.makespan,
    }
}

// Sorting before summing makes the mean independent of trace order.
fn order_free_mean(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn compute_metrics(traces: &[EpisodeTrace], gamma: f64) -> Result<MetricsReport> {
    if traces.is_empty() {
        return Err(Error::Usage("compute_metrics needs at least one trace".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Usage(format!("gamma must be in [0,1), got {gamma}")));
    }
    let per: Vec<EpisodeMetrics> = traces.iter().map(|t| episode_metrics(t, gamma)).collect();
    let col = |f: fn(&EpisodeMetrics) -> f64| order_free_mean(per.iter().map(f).collect());
    Ok(MetricsReport {
        asd: col(|m| m.asd),
        tcr: col(|m| m.tcr),
        tp: col(|m| m.tp),
        rc: col(|m| m.rc),
        avg_cum_reward: col(|m| m.cum_reward),
        episodes: traces.len(),
        seeds: Vec::new(),
        config_fingerprint: String::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Asd,
    Tcr,
    Tp,
    Rc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Asd, Metric::Tcr, Metric::Tp, Metric::Rc];

    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::Asd | Metric::Rc)
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Asd => "ASD ↓",
            Metric::Tcr => "TCR ↑",
            Metric::Tp => "TP ↑",
            Metric::Rc => "RC ↓",
        }
    }

    pub fn of(self, r: &MetricsReport) -> f64 {
        match self {
            Metric::Asd => r.asd,
            Metric::Tcr => r.tcr,
            Metric::Tp => r.tp,
            Metric::Rc => r.rc,
        }
    }
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for n < 2).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub agent: String,
    pub asd: f64,
    pub tcr: f64,
    pub tp: f64,
    pub rc: f64,
    /// Competition ranks in ASD, TCR, TP, RC order (1 = best).
    pub ranks: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

/// Ranks agents per metric in each metric's preferred direction. Rows keep
/// name order; equal values share a rank.
pub fn compare_reports(reports: &BTreeMap<String, MetricsReport>) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(Error::Usage("compare_reports needs at least two reports".into()));
    }
    let mut warnings = Vec::new();
    let mut fingerprints = reports.values().map(|r| r.config_fingerprint.as_str());
    let first = fingerprints.next().unwrap_or_default();
    if fingerprints.any(|f| f != first) {
        warnings.push("reports were produced under different run configurations".to_string());
    }
    let rows = reports
        .iter()
        .map(|(name, r)| {
            let mut ranks = [0usize; 4];
            for (k, m) in Metric::ALL.iter().enumerate() {
                let mine = m.of(r);
                let better = reports
                    .values()
                    .filter(|o| {
                        let theirs = m.of(o);
                        if m.lower_is_better() {
                            theirs < mine
                        } else {
                            theirs > mine
                        }
                    })
                    .count();
                ranks[k] = better + 1;
            }
            ComparisonRow {
                agent: name.clone(),
                asd: r.asd,
                tcr: r.tcr,
                tp: r.tp,
                rc: r.rc,
                ranks,
            }
        })
        .collect();
    Ok(ComparisonTable {
        columns: Metric::ALL.iter().map(|m| m.label().to_string()).collect(),
        rows,
        warnings,
    })
}

impl ComparisonTable {
    /// Plain-text rendering with per-metric rank in parentheses.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<14}", "Method");
        for c in &self.columns {
            let _ = write!(out, "{c:>16}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<14}", row.agent);
            for (v, rank) in [row.asd, row.tcr, row.tp, row.rc].iter().zip(row.ranks) {
                let _ = write!(out, "{:>16}", format!("{v:.3} ({rank})"));
            }
            out.push('\n');
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }

    pub fn row(&self, agent: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.agent == agent)
    }
}
