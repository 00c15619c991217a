use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AgentKind, RunConfig};
use super::runner::{pool, run_agent};
use crate::error::{Error, Result};
use crate::metrics::mean_sd;

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    LearningRate,
    Gamma,
    NodeCount,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::LearningRate => "lr",
            Self::Gamma => "gamma",
            Self::NodeCount => "nodes",
        }
    }

    /// Metric recorded per run: reward for the learning-rate sweep, delay
    /// otherwise.
    pub fn metric(self) -> &'static str {
        match self {
            Self::LearningRate => "avg_cum_reward",
            _ => "asd",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Self::LearningRate => vec![1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2],
            Self::Gamma => vec![0.80, 0.85, 0.90, 0.93, 0.95, 0.97, 0.99],
            Self::NodeCount => vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 16.0],
        }
    }

    pub fn check(self, v: f64) -> Result<()> {
        let ok = match self {
            Self::LearningRate => v > 0.0 && v.is_finite(),
            Self::Gamma => v > 0.0 && v < 1.0,
            Self::NodeCount => (1.0..=1024.0).contains(&v) && v.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{} value {v} is outside its domain", self.name())))
        }
    }

    fn apply(self, base: &RunConfig, v: f64) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            Self::LearningRate => cfg.agent.lr = v,
            Self::Gamma => cfg.agent.gamma = v,
            Self::NodeCount => cfg.cluster.nodes = v as usize,
        }
        cfg
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "lr" | "learningrate" => Ok(Self::LearningRate),
            "gamma" => Ok(Self::Gamma),
            "nodes" | "nodecount" => Ok(Self::NodeCount),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?}; expected lr, gamma or nodes"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub agent: AgentKind,
    pub base: RunConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        for &v in &self.grid {
            self.param.check(v)?;
        }
        self.base.validate()
    }
}

/// One (value, seed) run. A failed run keeps its row with `status` set to
/// the error and an empty metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub metric: String,
    pub metric_value: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub param: String,
    pub value: f64,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n_ok: usize,
}

/// Runs the grid × seeds, in parallel on up to `jobs` threads. Rows come back
/// in (grid index, seed index) order.
pub fn sweep(spec: &SweepSpec, out: Option<&Path>, jobs: usize) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let cells: Vec<(f64, u64)> = spec
        .grid
        .iter()
        .flat_map(|&v| spec.base.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows: Vec<SweepRow> = pool(jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(v, seed)| {
                let cfg = spec.param.apply(&spec.base, v);
                let result = run_agent(&cfg, spec.agent, seed).map(|run| match spec.param {
                    SweepParam::LearningRate => run.report.avg_cum_reward,
                    _ => run.report.asd,
                });
                let (metric_value, status) = match result {
                    Ok(x) if x.is_finite() => (Some(x), "ok".to_string()),
                    Ok(x) => (None, format!("non-finite metric {x}")),
                    Err(e) => (None, e.to_string()),
                };
                SweepRow {
                    param: spec.param.name().to_string(),
                    value: v,
                    seed,
                    metric: spec.param.metric().to_string(),
                    metric_value,
                    status,
                }
            })
            .collect()
    });

    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| {
            Error::Config(format!("cannot create output dir {}: {e}", out.display()))
        })?;
        let mut w = csv::Writer::from_path(out.join(SWEEP_CSV))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(out.join(SUMMARY_CSV))?;
        for s in summarize(&rows) {
            w.serialize(s)?;
        }
        w.flush()?;
    }
    Ok(rows)
}

/// Mean ± sample sd per grid value over successful runs, in first-seen
/// value order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.contains(&r.value) {
            values.push(r.value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.value == v).collect();
            let ok: Vec<f64> = mine.iter().filter_map(|r| r.metric_value).collect();
            let (mean, sd) = if ok.is_empty() { (f64::NAN, f64::NAN) } else { mean_sd(&ok) };
            SweepSummary {
                param: mine[0].param.clone(),
                value: v,
                metric: mine[0].metric.clone(),
                mean,
                sd,
                n_ok: ok.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: f64, seed: u64, x: Option<f64>) -> SweepRow {
        SweepRow {
            param: "gamma".into(),
            value,
            seed,
            metric: "asd".into(),
            metric_value: x,
            status: if x.is_some() { "ok".into() } else { "failed".into() },
        }
    }

    #[test]
    fn summary_keeps_value_order_and_skips_failures() {
        let rows = [
            row(0.9, 1, Some(2.0)),
            row(0.9, 2, Some(4.0)),
            row(0.8, 1, Some(1.0)),
            row(0.8, 2, None),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].value, s[0].mean, s[0].n_ok), (0.9, 3.0, 2));
        assert!((s[0].sd - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!((s[1].value, s[1].mean, s[1].n_ok), (0.8, 1.0, 1));
    }

    #[test]
    fn domains() {
        assert!(SweepParam::Gamma.check(1.0).is_err());
        assert!(SweepParam::Gamma.check(0.99).is_ok());
        assert!(SweepParam::LearningRate.check(0.0).is_err());
        assert!(SweepParam::NodeCount.check(2.5).is_err());
        assert!(SweepParam::NodeCount.check(0.0).is_err());
        assert_eq!("learning_rate".parse::<SweepParam>().unwrap(), SweepParam::LearningRate);
        for p in [SweepParam::LearningRate, SweepParam::Gamma, SweepParam::NodeCount] {
            assert_eq!(p.default_grid().len(), 7);
            assert!(p.default_grid().iter().all(|&v| p.check(v).is_ok()));
        }
    }
}
