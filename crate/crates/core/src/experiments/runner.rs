use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{derive_run_seed, AgentKind, RunConfig};
use crate::agents::{AgentCheckpoint, DqnAgent, Heuristic, QLearningAgent, Transition};
use crate::cluster::{trace_to_jsonl, SimEvent};
use crate::env::EtlEnv;
use crate::error::{Error, Result};
use crate::metrics::{
    compare_reports, compute_metrics, episode_metrics, ComparisonRow, ComparisonTable,
    EpisodeTrace, Metric, MetricsReport,
};

pub const REWARD_CURVE_FILE: &str = "reward_curve.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_JSON: &str = "bench.json";

pub fn checkpoint_file(seed: u64) -> String {
    format!("checkpoint_seed{seed}.json")
}

pub fn trace_file(seed: u64) -> String {
    format!("trace_seed{seed}.jsonl")
}

/// One row of the training reward curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub episode: usize,
    pub steps: usize,
    pub total_reward: f64,
    pub discounted_return: f64,
    pub epsilon: f64,
    /// Mean TD loss over the episode's gradient steps; empty before warmup.
    pub mean_loss: Option<f64>,
    pub asd: f64,
    pub tcr: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub agent: AgentKind,
    pub seed: u64,
    pub curve: Vec<EpisodeLog>,
    /// Greedy evaluation episodes.
    pub eval: Vec<EpisodeTrace>,
    pub report: MetricsReport,
    pub checkpoint: Option<AgentCheckpoint>,
    /// Event trace of the first evaluation episode.
    pub events: Vec<SimEvent>,
}

enum Policy {
    Dqn(Box<DqnAgent>),
    Tabular(QLearningAgent),
    Fixed(Heuristic, ChaCha8Rng),
}

impl Policy {
    fn act(&mut self, env: &EtlEnv, s: &[f64], explore: bool) -> Result<usize> {
        let legal = env.legal_actions();
        match self {
            Policy::Dqn(a) if explore => a.act(s, Some(&legal)),
            Policy::Dqn(a) => a.greedy(s, Some(&legal)),
            Policy::Tabular(q) if explore => Ok(q.act(s, &legal)),
            Policy::Tabular(q) => Ok(q.greedy(s, &legal)),
            Policy::Fixed(h, rng) => Ok(h.select(env, rng)),
        }
    }
}

fn build_policy(cfg: &RunConfig, kind: AgentKind, env: &EtlEnv, seed: u64) -> Result<Policy> {
    let agent_seed = derive_run_seed(seed, "agent", 0);
    Ok(match kind {
        AgentKind::Dqn | AgentKind::Ddqn => {
            let mut acfg = cfg.agent.clone();
            acfg.double_dqn = kind == AgentKind::Ddqn;
            Policy::Dqn(Box::new(DqnAgent::new(
                acfg,
                env.state_dim(),
                env.num_actions(),
                agent_seed,
            )?))
        }
        AgentKind::QTable => Policy::Tabular(QLearningAgent::new(
            env,
            cfg.tabular.alpha,
            cfg.agent.gamma,
            cfg.agent.schedule(),
            agent_seed,
        )),
        AgentKind::Heuristic(h) => {
            Policy::Fixed(Heuristic::new(h), ChaCha8Rng::seed_from_u64(agent_seed))
        }
    })
}

fn train_episode(
    env: &mut EtlEnv,
    policy: &mut Policy,
    cfg: &RunConfig,
    seed: u64,
    episode: usize,
) -> Result<EpisodeLog> {
    let mut s = env.reset(&cfg.workload, derive_run_seed(seed, "train", episode as u64))?;
    let (mut loss_sum, mut losses) = (0.0, 0usize);
    while !env.is_terminal() {
        let a = policy.act(env, &s, true)?;
        let step = env.step(a)?;
        let next_legal = env.legal_actions();
        match policy {
            Policy::Dqn(agent) => {
                let t = Transition {
                    s,
                    a,
                    r: step.reward,
                    s_next: step.next_state.clone(),
                    terminal: step.terminal,
                    next_legal: Some(next_legal),
                };
                if let Some(l) = agent.train_step(t)? {
                    loss_sum += l;
                    losses += 1;
                }
            }
            Policy::Tabular(q) => {
                q.observe(&s, a, step.reward, &step.next_state, step.terminal, &next_legal)
            }
            Policy::Fixed(..) => {}
        }
        s = step.next_state;
    }
    let trace = env.episode_trace()?;
    let m = episode_metrics(&trace, cfg.agent.gamma);
    let epsilon = match policy {
        Policy::Dqn(a) => a.epsilon(),
        _ => 0.0,
    };
    Ok(EpisodeLog {
        seed,
        episode,
        steps: trace.rewards.len(),
        total_reward: trace.rewards.iter().sum(),
        discounted_return: m.cum_reward,
        epsilon,
        mean_loss: (losses > 0).then(|| loss_sum / losses as f64),
        asd: m.asd,
        tcr: m.tcr,
    })
}

/// Workload seed of evaluation episode `episode`. Evaluation uses one fixed
/// suite per workload config, shared by every run seed and agent, so spread
/// across run seeds reflects the learner rather than the workloads.
pub fn eval_workload_seed(cfg: &RunConfig, episode: usize) -> u64 {
    derive_run_seed(cfg.workload.seed, "eval", episode as u64)
}

/// Trains `kind` (heuristics skip training) and evaluates it greedily.
///
/// Random streams derived from `seed`: `train` indexes the workload of each
/// training episode, `agent` seeds network init and exploration.
pub fn run_agent(cfg: &RunConfig, kind: AgentKind, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let cluster = cfg.cluster.build()?;
    let mut env = EtlEnv::new(cfg.env.clone(), cluster)?;
    let mut policy = build_policy(cfg, kind, &env, seed)?;

    let mut curve = Vec::new();
    if kind.learns() {
        for episode in 0..cfg.episodes {
            curve.push(train_episode(&mut env, &mut policy, cfg, seed, episode)?);
        }
    }

    let mut eval = Vec::with_capacity(cfg.eval_episodes);
    let mut events = Vec::new();
    if let Policy::Fixed(h, _) = &mut policy {
        h.reset();
    }
    for episode in 0..cfg.eval_episodes {
        let mut s = env.reset(&cfg.workload, eval_workload_seed(cfg, episode))?;
        while !env.is_terminal() {
            let a = policy.act(&env, &s, false)?;
            s = env.step(a)?.next_state;
        }
        if episode == 0 {
            events = env.sim().map(|sim| sim.trace().to_vec()).unwrap_or_default();
        }
        eval.push(env.episode_trace()?);
    }

    let mut report = compute_metrics(&eval, cfg.agent.gamma)?;
    report.seeds = vec![seed];
    report.config_fingerprint = cfg.fingerprint();
    let checkpoint = match &policy {
        Policy::Dqn(a) => Some(a.checkpoint()),
        _ => None,
    };
    Ok(RunOutput {
        agent: kind,
        seed,
        curve,
        eval,
        report,
        checkpoint,
        events,
    })
}

pub(crate) fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))
}

/// Metrics over the evaluation episodes of several runs of one agent.
fn aggregate(cfg: &RunConfig, runs: &[&RunOutput]) -> Result<MetricsReport> {
    let traces: Vec<EpisodeTrace> = runs.iter().flat_map(|r| r.eval.iter().cloned()).collect();
    let mut report = compute_metrics(&traces, cfg.agent.gamma)?;
    report.seeds = runs.iter().map(|r| r.seed).collect();
    report.config_fingerprint = cfg.fingerprint();
    Ok(report)
}

#[derive(Serialize)]
struct SeedReport<'a> {
    seed: u64,
    report: &'a MetricsReport,
}

#[derive(Serialize)]
struct TrainMetrics<'a> {
    agent: &'a str,
    aggregate: MetricsReport,
    per_seed: Vec<SeedReport<'a>>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output dir {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Trains the DQN agent (Double-DQN when `agent.double_dqn`) once per seed
/// and writes `reward_curve.csv`, `metrics.json` and one checkpoint per
/// seed; with `trace`, also the first evaluation episode's event trace.
pub fn train(cfg: &RunConfig, out: &Path, trace: bool) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    create_dir(out)?;
    let kind = if cfg.agent.double_dqn { AgentKind::Ddqn } else { AgentKind::Dqn };
    let runs = cfg
        .seeds
        .iter()
        .map(|&seed| run_agent(cfg, kind, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for log in runs.iter().flat_map(|r| &r.curve) {
        w.serialize(log)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_file(&out.join(REWARD_CURVE_FILE), &String::from_utf8_lossy(&bytes))?;

    let metrics = TrainMetrics {
        agent: kind.name(),
        aggregate: aggregate(cfg, &runs.iter().collect::<Vec<_>>())?,
        per_seed: runs
            .iter()
            .map(|r| SeedReport { seed: r.seed, report: &r.report })
            .collect(),
    };
    write_file(&out.join(METRICS_FILE), &serde_json::to_string_pretty(&metrics)?)?;
    for r in &runs {
        if let Some(c) = &r.checkpoint {
            write_file(&out.join(checkpoint_file(r.seed)), &serde_json::to_string(c)?)?;
        }
        if trace {
            write_file(&out.join(trace_file(r.seed)), &trace_to_jsonl(&r.events)?)?;
        }
    }
    Ok(runs)
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub runs: Vec<RunOutput>,
    /// Per-agent metrics pooled over seeds, keyed by agent name.
    pub aggregate: BTreeMap<String, MetricsReport>,
    pub table: ComparisonTable,
}

impl BenchOutput {
    /// Per-seed values of `metric` for one agent, in seed order.
    pub fn per_seed(&self, agent: AgentKind, metric: Metric) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.agent == agent)
            .map(|r| metric.of(&r.report))
            .collect()
    }
}

#[derive(Serialize)]
struct BenchRow<'a> {
    agent: &'a str,
    seed: String,
    asd: f64,
    tcr: f64,
    tp: f64,
    rc: f64,
    avg_cum_reward: f64,
    episodes: usize,
}

impl<'a> BenchRow<'a> {
    fn new(agent: &'a str, seed: String, r: &MetricsReport) -> Self {
        Self {
            agent,
            seed,
            asd: r.asd,
            tcr: r.tcr,
            tp: r.tp,
            rc: r.rc,
            avg_cum_reward: r.avg_cum_reward,
            episodes: r.episodes,
        }
    }
}

#[derive(Serialize)]
struct BenchJson<'a> {
    table: &'a ComparisonTable,
    aggregate: &'a BTreeMap<String, MetricsReport>,
}

fn single_row_table(name: &str, r: &MetricsReport) -> ComparisonTable {
    ComparisonTable {
        columns: Metric::ALL.iter().map(|m| m.label().to_string()).collect(),
        rows: vec![ComparisonRow {
            agent: name.to_string(),
            asd: r.asd,
            tcr: r.tcr,
            tp: r.tp,
            rc: r.rc,
            ranks: [1; 4],
        }],
        warnings: Vec::new(),
    }
}

/// Runs every agent on every seed (identical workloads and cluster) and
/// writes `bench.csv` (one row per agent per seed, then one `all` row per
/// agent) and `bench.json` (ranked comparison table). Heuristics skip
/// training. `out = None` skips writing.
pub fn bench(cfg: &RunConfig, agents: &[AgentKind], out: Option<&Path>, jobs: usize) -> Result<BenchOutput> {
    cfg.validate()?;
    if agents.is_empty() {
        return Err(Error::Config("no agents to benchmark".into()));
    }
    let jobs_list: Vec<(AgentKind, u64)> = agents
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs = pool(jobs)?.install(|| {
        jobs_list
            .par_iter()
            .map(|&(a, s)| run_agent(cfg, a, s))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut aggregate_reports = BTreeMap::new();
    for &a in agents {
        let mine: Vec<&RunOutput> = runs.iter().filter(|r| r.agent == a).collect();
        aggregate_reports.insert(a.name().to_string(), aggregate(cfg, &mine)?);
    }
    let table = if aggregate_reports.len() == 1 {
        let (name, r) = aggregate_reports.iter().next().expect("one entry");
        single_row_table(name, r)
    } else {
        compare_reports(&aggregate_reports)?
    };

    if let Some(out) = out {
        create_dir(out)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &runs {
            w.serialize(BenchRow::new(r.agent.name(), r.seed.to_string(), &r.report))?;
        }
        for (name, r) in &aggregate_reports {
            w.serialize(BenchRow::new(name, "all".to_string(), r))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_file(&out.join(BENCH_CSV), &String::from_utf8_lossy(&bytes))?;
        let json = BenchJson { table: &table, aggregate: &aggregate_reports };
        write_file(&out.join(BENCH_JSON), &serde_json::to_string_pretty(&json)?)?;
    }
    Ok(BenchOutput {
        runs,
        aggregate: aggregate_reports,
        table,
    })
}
