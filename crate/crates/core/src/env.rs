//! The scheduling MDP on top of [`Simulation`].
//!
//! Observation layout (all components in [0,1]):
//!
//! | range          | content                                                     |
//! |----------------|-------------------------------------------------------------|
//! | `0..8`         | candidate task: work, input MB, depth, out-degree, priority, stream flag; ready fraction; mean slack of ready tasks |
//! | `8..8+4N`      | per node: busy slot fraction, memory fraction, transfer fraction, local backlog per slot |
//! | `8+4N..12+4N`  | per source class: arrival rate, base latency (relational, then stream) |
//!
//! Actions `0..N` place the candidate task on that node; action `N` defers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSpec, Simulation, TaskOutcome, TaskStatus};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeTrace, TaskRecord};
use crate::workload::{generate_dag, SourceKind, TaskDag, WorkloadConfig};

pub const TASK_FEATURES: usize = 8;
pub const NODE_FEATURES: usize = 4;
pub const FLOW_FEATURES: usize = 4;

pub fn state_dim(nodes: usize) -> usize {
    TASK_FEATURES + NODE_FEATURES * nodes + FLOW_FEATURES
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub t_max: f64,
    pub c_max: f64,
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.a1, self.a2, self.a3];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(
                "reward weights must be non-negative with a positive sum".into(),
            ));
        }
        if !(self.t_max > 0.0 && self.c_max > 0.0) {
            return Err(Error::Config("t_max and c_max must be positive".into()));
        }
        Ok(())
    }
}

/// Multi-objective reward over the tasks finalized in one transition:
/// success rate minus clamped mean normalized latency and cost. Zero when no
/// task was finalized.
pub fn compute_reward(outcomes: &[TaskOutcome], w: &RewardWeights) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    let n = outcomes.len() as f64;
    let mut success = 0.0;
    let mut latency = 0.0;
    let mut cost = 0.0;
    for o in outcomes {
        if o.success {
            success += 1.0;
        }
        latency += (o.latency / w.t_max).min(1.0);
        cost += (o.cost / w.c_max).min(1.0);
    }
    w.a1 * success / n - w.a2 * latency / n - w.a3 * cost / n
}

/// The environment block of a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Overrides the workload-derived latency normalizer.
    pub t_max: Option<f64>,
    /// Overrides the workload-derived cost normalizer.
    pub c_max: Option<f64>,
    /// Horizon as a multiple of the serial-makespan estimate.
    pub horizon_multiplier: f64,
    /// Absolute horizon; takes precedence over the multiplier.
    pub horizon: Option<f64>,
    /// Treat infeasible placements as a defer instead of penalizing them.
    pub mask_invalid: bool,
    pub defer_cap: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            a1: 1.0,
            a2: 0.5,
            a3: 0.5,
            t_max: None,
            c_max: None,
            horizon_multiplier: 1.5,
            horizon: None,
            mask_invalid: false,
            defer_cap: 16,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon_multiplier > 0.0) {
            return Err(Error::Config("horizon_multiplier must be positive".into()));
        }
        if self.defer_cap == 0 {
            return Err(Error::Config("defer_cap must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub outcomes: Vec<TaskOutcome>,
    pub invalid_action: bool,
    /// The defer cap was reached and the environment forced a placement.
    pub defer_cap_hit: bool,
    pub dispatched: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub info: StepInfo,
}

fn collect_uncredited(credited: &[bool], sim: &Simulation, finalized: Vec<TaskOutcome>, info: &mut StepInfo) {
    for o in finalized {
        if credited[o.task] {
            debug_assert_eq!(sim.committed_outcome(o.task), Some(o), "dispatch-time outcome drifted");
        } else {
            info.outcomes.push(o);
        }
    }
}

fn percentile_95(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 1.0;
    }
    xs.sort_by(f64::total_cmp);
    let idx = ((xs.len() - 1) as f64 * 0.95).round() as usize;
    xs[idx]
}

#[derive(Clone, Debug)]
struct DagFeatures {
    depth: Vec<usize>,
    out_degree: Vec<usize>,
    max_depth: usize,
    max_out_degree: usize,
    max_work: f64,
    max_input: f64,
}

impl DagFeatures {
    fn new(dag: &TaskDag) -> Result<Self> {
        let depth = dag.depths()?;
        let out_degree: Vec<usize> = dag.children().iter().map(Vec::len).collect();
        Ok(Self {
            max_depth: depth.iter().copied().max().unwrap_or(0),
            max_out_degree: out_degree.iter().copied().max().unwrap_or(0),
            depth,
            out_degree,
            max_work: dag.tasks.iter().map(|t| t.work).fold(0.0, f64::max),
            max_input: dag.tasks.iter().map(|t| t.input_mb).fold(0.0, f64::max),
        })
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// One scheduling episode at a time over a fixed cluster.
#[derive(Clone, Debug)]
pub struct EtlEnv {
    cfg: EnvConfig,
    cluster: ClusterSpec,
    sim: Option<Simulation>,
    features: Option<DagFeatures>,
    flow: [f64; FLOW_FEATURES],
    weights: RewardWeights,
    consecutive_defers: usize,
    rewards: Vec<f64>,
    /// Tasks whose outcome was already reported at dispatch.
    credited: Vec<bool>,
}

impl EtlEnv {
    pub fn new(cfg: EnvConfig, cluster: ClusterSpec) -> Result<Self> {
        cfg.validate()?;
        cluster.validate()?;
        Ok(Self {
            cfg,
            cluster,
            sim: None,
            features: None,
            flow: [0.0; FLOW_FEATURES],
            weights: RewardWeights {
                a1: 1.0,
                a2: 0.5,
                a3: 0.5,
                t_max: 1.0,
                c_max: 1.0,
            },
            consecutive_defers: 0,
            rewards: Vec::new(),
            credited: Vec::new(),
        })
    }

    pub fn cluster(&self) -> &ClusterSpec {
        &self.cluster
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn num_actions(&self) -> usize {
        self.cluster.len() + 1
    }

    pub fn defer_action(&self) -> usize {
        self.cluster.len()
    }

    pub fn state_dim(&self) -> usize {
        state_dim(self.cluster.len())
    }

    pub fn weights(&self) -> &RewardWeights {
        &self.weights
    }

    pub fn sim(&self) -> Option<&Simulation> {
        self.sim.as_ref()
    }

    fn sim_ref(&self) -> Result<&Simulation> {
        self.sim
            .as_ref()
            .ok_or_else(|| Error::Usage("environment used before reset".into()))
    }

    /// Generates a fresh DAG with `seed` and starts an episode.
    pub fn reset(&mut self, workload: &WorkloadConfig, seed: u64) -> Result<Vec<f64>> {
        let cfg = WorkloadConfig { seed, ..workload.clone() };
        let dag = generate_dag(&cfg)?;
        self.flow = flow_features(&cfg);
        self.start(Arc::new(dag))
    }

    /// Starts an episode on an explicit DAG.
    pub fn reset_with_dag(&mut self, dag: Arc<TaskDag>) -> Result<Vec<f64>> {
        self.flow = match &dag.config {
            Some(cfg) => flow_features(cfg),
            None => flow_features(&WorkloadConfig::default()),
        };
        self.start(dag)
    }

    fn start(&mut self, dag: Arc<TaskDag>) -> Result<Vec<f64>> {
        let slack = dag
            .config
            .as_ref()
            .map(|c| c.deadline_slack)
            .unwrap_or(WorkloadConfig::default().deadline_slack);
        let (speed, bw, rate) = (
            self.cluster.mean_speed(),
            self.cluster.mean_bandwidth(),
            self.cluster.mean_cost_rate(),
        );
        let coord = self.cluster.coordination_overhead();
        let isolated: Vec<f64> = dag
            .tasks
            .iter()
            .map(|t| t.work / speed + t.input_mb / bw + coord)
            .collect();
        let costs: Vec<f64> = dag.tasks.iter().map(|t| t.work * rate).collect();
        // Serial makespan: one task at a time in release order, idling
        // until each release.
        let mut order: Vec<usize> = (0..dag.len()).collect();
        order.sort_by(|&a, &b| dag.tasks[a].release.total_cmp(&dag.tasks[b].release).then(a.cmp(&b)));
        let serial = order
            .iter()
            .fold(0.0_f64, |t, &i| t.max(dag.tasks[i].release) + isolated[i]);
        let c_max = self.cfg.c_max.unwrap_or_else(|| percentile_95(costs));
        self.weights = RewardWeights {
            a1: self.cfg.a1,
            a2: self.cfg.a2,
            a3: self.cfg.a3,
            t_max: self
                .cfg
                .t_max
                .unwrap_or_else(|| slack * percentile_95(isolated)),
            c_max: if c_max > 0.0 { c_max } else { 1.0 },
        };
        self.weights.validate()?;
        let horizon = self
            .cfg
            .horizon
            .unwrap_or(self.cfg.horizon_multiplier * serial.max(1.0));

        self.features = Some(DagFeatures::new(&dag)?);
        self.credited = vec![false; dag.len()];
        let mut sim = Simulation::new(dag, self.cluster.clone(), horizon)?;
        self.rewards.clear();
        self.consecutive_defers = 0;
        // Fire the t=0 release batch so s_0 sees it; the clock stays at 0.
        if sim.next_event_time() == Some(0.0) {
            sim.advance_to_next_event()?;
        }
        self.sim = Some(sim);
        self.observe()
    }

    pub fn is_terminal(&self) -> bool {
        self.sim.as_ref().is_none_or(Simulation::is_terminal)
    }

    pub fn candidate(&self) -> Option<usize> {
        self.sim.as_ref().and_then(Simulation::candidate)
    }

    /// Feasibility mask over actions; defer is always legal.
    pub fn legal_actions(&self) -> Vec<bool> {
        let n = self.cluster.len();
        let mut mask = vec![false; n + 1];
        mask[n] = true;
        if let Some(sim) = &self.sim {
            if let Some(c) = sim.candidate() {
                for (k, m) in mask.iter_mut().take(n).enumerate() {
                    *m = sim.can_assign(c, k);
                }
            }
        }
        mask
    }

    pub fn observe(&self) -> Result<Vec<f64>> {
        let sim = self.sim_ref()?;
        let f = self.features.as_ref().expect("features set with sim");
        let dag = sim.dag();
        let now = sim.now();
        let mut s = Vec::with_capacity(self.state_dim());

        let n_tasks = dag.len().max(1) as f64;
        match sim.candidate() {
            Some(c) => {
                let t = &dag.tasks[c];
                s.push(ratio(t.work, f.max_work));
                s.push(ratio(t.input_mb, f.max_input));
                s.push(ratio(f.depth[c] as f64, f.max_depth as f64));
                s.push(ratio(f.out_degree[c] as f64, f.max_out_degree as f64));
                s.push(t.priority as f64 / 4.0);
                s.push(if t.source == SourceKind::SemiStructuredStream { 1.0 } else { 0.0 });
            }
            None => s.extend([0.0; 6]),
        }
        let ready = sim.ready();
        s.push(ratio(ready.len() as f64, n_tasks));
        let slack = if ready.is_empty() {
            0.0
        } else {
            ready
                .iter()
                .map(|&t| {
                    let rt = sim.task(t);
                    let (rel, dl) = (rt.release.unwrap_or(0.0), rt.deadline.unwrap_or(0.0));
                    ratio(dl - now, dl - rel)
                })
                .sum::<f64>()
                / ready.len() as f64
        };
        s.push(slack);

        for (k, spec) in self.cluster.nodes.iter().enumerate() {
            let load = &sim.state().nodes[k];
            let slots = spec.slots as f64;
            s.push(ratio(load.busy_slots as f64, slots));
            s.push(ratio(load.mem_used, spec.mem_capacity));
            s.push(ratio(load.transfers as f64, slots));
            s.push(ratio(sim.local_backlog(k) as f64, slots));
        }
        s.extend(self.flow);
        debug_assert_eq!(s.len(), self.state_dim());
        Ok(s)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.is_terminal() {
            return Err(Error::Usage("step called on a terminal episode".into()));
        }
        let defer = self.defer_action();
        if action > defer {
            return Err(Error::Usage(format!(
                "action {action} outside 0..={defer}"
            )));
        }
        let mut info = StepInfo::default();
        let mut penalty = 0.0;
        let candidate = self.candidate();
        let feasible = action < defer
            && candidate.is_some_and(|c| self.sim_ref().is_ok_and(|s| s.can_assign(c, action)));

        if feasible {
            let c = candidate.expect("feasible implies candidate");
            self.dispatch(c, action, &mut info)?;
        } else if action == defer || self.cfg.mask_invalid {
            self.defer(&mut info)?;
        } else {
            info.invalid_action = true;
            penalty = -self.weights.a2;
            self.advance_one(&mut info)?;
        }

        let reward = compute_reward(&info.outcomes, &self.weights) + penalty;
        self.rewards.push(reward);
        Ok(StepResult {
            next_state: self.observe()?,
            reward,
            terminal: self.is_terminal(),
            info,
        })
    }

    fn dispatch(&mut self, task: usize, node: usize, info: &mut StepInfo) -> Result<()> {
        let sim = self.sim.as_mut().expect("checked by caller");
        sim.assign(task, node)?;
        // The placement fixes the task's finish time, so its outcome is
        // final here rather than at the completion event.
        info.outcomes.extend(sim.committed_outcome(task));
        self.credited[task] = true;
        info.dispatched = Some((task, node));
        self.consecutive_defers = 0;
        self.advance_until_decision(info)
    }

    fn defer(&mut self, info: &mut StepInfo) -> Result<()> {
        if let Some(c) = self.sim_ref()?.candidate() {
            self.consecutive_defers += 1;
            if self.consecutive_defers >= self.cfg.defer_cap {
                info.defer_cap_hit = true;
                self.consecutive_defers = 0;
                let sim = self.sim_ref()?;
                let best = (0..self.cluster.len())
                    .filter(|&k| sim.can_assign(c, k))
                    .min_by(|&a, &b| {
                        sim.estimate(c, a)
                            .total()
                            .total_cmp(&sim.estimate(c, b).total())
                            .then(a.cmp(&b))
                    });
                if let Some(node) = best {
                    return self.dispatch(c, node, info);
                }
            }
        }
        self.advance_one(info)
    }

    fn advance_one(&mut self, info: &mut StepInfo) -> Result<()> {
        let sim = self.sim.as_mut().expect("checked by caller");
        let adv = sim.advance_to_next_event()?;
        collect_uncredited(&self.credited, sim, adv.finalized, info);
        Ok(())
    }

    fn advance_until_decision(&mut self, info: &mut StepInfo) -> Result<()> {
        let sim = self.sim.as_mut().expect("checked by caller");
        while !sim.is_terminal() && !sim.at_decision_point() {
            let adv = sim.advance_to_next_event()?;
            let idle = adv.fired.is_empty() && !sim.is_terminal();
            collect_uncredited(&self.credited, sim, adv.finalized, info);
            if idle {
                return Err(Error::Deadlock {
                    time: sim.now(),
                    unfinished: sim.dag().len() - sim.status_counts().terminal_total(),
                });
            }
        }
        Ok(())
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Per-task outcomes and per-step rewards of the current episode.
    pub fn episode_trace(&self) -> Result<EpisodeTrace> {
        let sim = self.sim_ref()?;
        let c_max = self.weights.c_max;
        let horizon = sim.horizon();
        let tasks = sim
            .tasks()
            .iter()
            .enumerate()
            .map(|(id, rt)| {
                let release = rt.release;
                let latency = match (rt.finish, release) {
                    (Some(f), Some(r)) => f - r,
                    (None, Some(r)) if rt.status == TaskStatus::Unfinished => horizon - r,
                    _ => 0.0,
                };
                TaskRecord {
                    task: id,
                    status: rt.status,
                    release,
                    start: rt.start,
                    finish: rt.finish,
                    node: rt.node,
                    success: rt.status == TaskStatus::Completed,
                    latency,
                    cost: rt.cost,
                    cost_norm: (rt.cost / c_max).min(1.0),
                }
            })
            .collect();
        Ok(EpisodeTrace {
            tasks,
            rewards: self.rewards.clone(),
            horizon,
            makespan: sim.now(),
            wall_clock_secs: 0.0,
        })
    }
}

fn flow_features(cfg: &WorkloadConfig) -> [f64; FLOW_FEATURES] {
    let max_rate = cfg.sources.iter().map(|s| s.arrival_rate).fold(0.0, f64::max);
    let max_lat = cfg.sources.iter().map(|s| s.base_latency).fold(0.0, f64::max);
    let rel = cfg.source(SourceKind::StructuredRelational);
    let stream = cfg.source(SourceKind::SemiStructuredStream);
    [
        ratio(rel.arrival_rate, max_rate),
        ratio(rel.base_latency, max_lat),
        ratio(stream.arrival_rate, max_rate),
        ratio(stream.base_latency, max_lat),
    ]
}
