//! Synthetic multi-stage ETL workloads.
//!
//! A workload is a layered DAG with five fixed stages (extract, clean,
//! transform, aggregate, load). Each task is one ETL operation on one table
//! partition. Extract tasks come from one of two source classes, modelled on
//! warehouse tables (ORDERS, CUSTOMER, LINEITEM style relational extracts)
//! and semi-structured streaming records.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_STAGES: usize = 5;

/// Range of per-task work before `scale_factor` is applied (compute units).
pub const WORK_RANGE: (f64, f64) = (1.0, 50.0);
/// Range of per-task input size (MB).
pub const INPUT_MB_RANGE: (f64, f64) = (1.0, 100.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Extract,
    Clean,
    Transform,
    Aggregate,
    Load,
}

impl Stage {
    pub const ALL: [Stage; NUM_STAGES] = [
        Stage::Extract,
        Stage::Clean,
        Stage::Transform,
        Stage::Aggregate,
        Stage::Load,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceKind {
    StructuredRelational,
    SemiStructuredStream,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceClass {
    pub kind: SourceKind,
    /// Tasks per sim-second for the Poisson part of the release process.
    pub arrival_rate: f64,
    /// Sim-seconds.
    pub base_latency: f64,
}

impl SourceClass {
    fn validate(&self) -> Result<()> {
        if !self.arrival_rate.is_finite() || self.arrival_rate < 0.0 {
            return Err(Error::Config(format!(
                "{:?}: arrival_rate must be finite and >= 0",
                self.kind
            )));
        }
        if !self.base_latency.is_finite() || self.base_latency < 0.0 {
            return Err(Error::Config(format!(
                "{:?}: base_latency must be >= 0",
                self.kind
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub stage: Stage,
    pub work: f64,
    pub input_mb: f64,
    pub source: SourceKind,
    /// Earliest release. Non-extract tasks are released at runtime when their
    /// last parent completes; for them this is 0.
    pub release: f64,
    /// `deadline - release` is the task's relative deadline window, which the
    /// simulator re-anchors at the effective release.
    pub deadline: f64,
    pub priority: u8,
}

impl Task {
    pub fn deadline_window(&self) -> f64 {
        self.deadline - self.release
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub n_tasks: usize,
    pub layer_widths: [usize; NUM_STAGES],
    pub edge_prob: f64,
    pub scale_factor: f64,
    pub deadline_slack: f64,
    pub stream_fraction: f64,
    pub seed: u64,
    /// Index 0 is the relational class, index 1 the stream class.
    #[serde(default = "default_sources")]
    pub sources: [SourceClass; 2],
    /// Mean node speed used to size deadlines (compute units / s).
    #[serde(default = "default_reference_speed")]
    pub reference_speed: f64,
    /// Mean node bandwidth used to size deadlines (MB / s).
    #[serde(default = "default_reference_bandwidth")]
    pub reference_bandwidth: f64,
}

fn default_sources() -> [SourceClass; 2] {
    [
        SourceClass {
            kind: SourceKind::StructuredRelational,
            arrival_rate: 0.1,
            base_latency: 0.2,
        },
        SourceClass {
            kind: SourceKind::SemiStructuredStream,
            arrival_rate: 0.4,
            base_latency: 0.05,
        },
    ]
}

// Means of the default-hetero-v1 node profile: speed U[1,4], bandwidth U[5,20].
fn default_reference_speed() -> f64 {
    2.5
}

fn default_reference_bandwidth() -> f64 {
    12.5
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            n_tasks: 200,
            layer_widths: [40; NUM_STAGES],
            edge_prob: 0.1,
            scale_factor: 1.0,
            deadline_slack: 3.0,
            stream_fraction: 0.3,
            seed: 0,
            sources: default_sources(),
            reference_speed: default_reference_speed(),
            reference_bandwidth: default_reference_bandwidth(),
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 {
            return Err(Error::Config("n_tasks must be > 0".into()));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("layer_widths must all be positive".into()));
        }
        if self.n_tasks < NUM_STAGES {
            return Err(Error::Config(format!(
                "n_tasks must be >= {NUM_STAGES} (one task per stage)"
            )));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(Error::Config("edge_prob must be in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.stream_fraction) {
            return Err(Error::Config("stream_fraction must be in [0,1]".into()));
        }
        if !(self.scale_factor.is_finite() && self.scale_factor > 0.0) {
            return Err(Error::Config("scale_factor must be positive".into()));
        }
        if !(self.deadline_slack.is_finite() && self.deadline_slack > 1.0) {
            return Err(Error::Config("deadline_slack must be > 1".into()));
        }
        if !(self.reference_speed > 0.0 && self.reference_bandwidth > 0.0) {
            return Err(Error::Config(
                "reference_speed and reference_bandwidth must be positive".into(),
            ));
        }
        for s in &self.sources {
            s.validate()?;
        }
        if self.sources[0].kind != SourceKind::StructuredRelational
            || self.sources[1].kind != SourceKind::SemiStructuredStream
        {
            return Err(Error::Config(
                "sources must list the relational class then the stream class".into(),
            ));
        }
        Ok(())
    }

    pub fn source(&self, kind: SourceKind) -> &SourceClass {
        match kind {
            SourceKind::StructuredRelational => &self.sources[0],
            SourceKind::SemiStructuredStream => &self.sources[1],
        }
    }

    /// Layer sizes summing to `n_tasks`, proportional to `layer_widths`
    /// (largest-remainder apportionment, every layer at least one task).
    pub fn layer_sizes(&self) -> [usize; NUM_STAGES] {
        let total: usize = self.layer_widths.iter().sum();
        if total == self.n_tasks {
            return self.layer_widths;
        }
        let spare = self.n_tasks - NUM_STAGES;
        let mut sizes = [1usize; NUM_STAGES];
        let mut rems = [(0.0f64, 0usize); NUM_STAGES];
        let mut assigned = 0;
        for (k, &w) in self.layer_widths.iter().enumerate() {
            let exact = spare as f64 * w as f64 / total as f64;
            let floor = exact.floor() as usize;
            sizes[k] += floor;
            assigned += floor;
            rems[k] = (exact - floor as f64, k);
        }
        rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, k) in rems.iter().take(spare - assigned) {
            sizes[k] += 1;
        }
        sizes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDag {
    pub format: String,
    pub config: Option<WorkloadConfig>,
    pub scale_factor: f64,
    pub tasks: Vec<Task>,
    pub edges: Vec<(usize, usize)>,
}

pub const DAG_FORMAT: &str = "etl-dag-v1";

impl TaskDag {
    /// Builds a DAG from explicit parts. Task ids must be dense `0..n` and
    /// listed in id order; edges must reference existing tasks. Cycles are
    /// not rejected here, see [`topological_order`].
    pub fn from_parts(tasks: Vec<Task>, edges: Vec<(usize, usize)>) -> Result<Self> {
        for (i, t) in tasks.iter().enumerate() {
            if t.id != i {
                return Err(Error::MalformedWorkload(format!(
                    "task ids must be dense and ordered: position {i} holds id {}",
                    t.id
                )));
            }
            if !(t.work > 0.0) {
                return Err(Error::MalformedWorkload(format!("task {i}: work must be > 0")));
            }
            if !(t.deadline > t.release) {
                return Err(Error::MalformedWorkload(format!(
                    "task {i}: deadline must exceed release"
                )));
            }
        }
        for &(p, c) in &edges {
            if p >= tasks.len() || c >= tasks.len() {
                return Err(Error::MalformedWorkload(format!(
                    "edge ({p},{c}) references a missing task"
                )));
            }
        }
        Ok(Self {
            format: DAG_FORMAT.to_string(),
            config: None,
            scale_factor: 1.0,
            tasks,
            edges,
        })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Parent lists indexed by task id, each sorted ascending.
    pub fn parents(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.tasks.len()];
        for &(p, c) in &self.edges {
            out[c].push(p);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.tasks.len()];
        for &(p, c) in &self.edges {
            out[p].push(c);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }

    /// Longest-path depth from any root, indexed by task id.
    pub fn depths(&self) -> Result<Vec<usize>> {
        let order = topological_order(self)?;
        let parents = self.parents();
        let mut depth = vec![0usize; self.tasks.len()];
        for &t in &order {
            depth[t] = parents[t].iter().map(|&p| depth[p] + 1).max().unwrap_or(0);
        }
        Ok(depth)
    }

    /// Checks acyclicity and stage monotonicity of every edge.
    pub fn validate(&self) -> Result<()> {
        topological_order(self)?;
        for &(p, c) in &self.edges {
            if self.tasks[p].stage >= self.tasks[c].stage {
                return Err(Error::MalformedWorkload(format!(
                    "edge ({p},{c}) does not go to a strictly later stage"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dag: TaskDag = serde_json::from_str(s)?;
        if dag.format != DAG_FORMAT {
            return Err(Error::Config(format!(
                "unsupported DAG format {:?}, expected {DAG_FORMAT:?}",
                dag.format
            )));
        }
        let checked = TaskDag::from_parts(dag.tasks.clone(), dag.edges.clone())?;
        checked.validate()?;
        Ok(dag)
    }
}

/// Kahn's algorithm with a min-heap so ready ties resolve by ascending id.
pub fn topological_order(dag: &TaskDag) -> Result<Vec<usize>> {
    let n = dag.tasks.len();
    let mut indegree = vec![0usize; n];
    let children = dag.children();
    for &(_, c) in &dag.edges {
        indegree[c] += 1;
    }
    let mut heap: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(t)) = heap.pop() {
        order.push(t);
        for &c in &children[t] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                heap.push(Reverse(c));
            }
        }
    }
    if order.len() != n {
        return Err(Error::MalformedWorkload(format!(
            "cycle detected: {} of {n} tasks unreachable in topological order",
            n - order.len()
        )));
    }
    Ok(order)
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

/// Generates a layered ETL DAG. Deterministic in `cfg` (including its seed).
pub fn generate_dag(cfg: &WorkloadConfig) -> Result<TaskDag> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes = cfg.layer_sizes();

    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(NUM_STAGES);
    let mut next_id = 0;
    for &size in &sizes {
        layers.push((next_id..next_id + size).collect());
        next_id += size;
    }

    let mut tasks = Vec::with_capacity(cfg.n_tasks);
    for (stage, layer) in Stage::ALL.iter().zip(&layers) {
        for &id in layer {
            let work = log_uniform(&mut rng, WORK_RANGE.0, WORK_RANGE.1) * cfg.scale_factor;
            let input_mb = log_uniform(&mut rng, INPUT_MB_RANGE.0, INPUT_MB_RANGE.1);
            let priority = rng.random_range(0..=4u8);
            tasks.push(Task {
                id,
                stage: *stage,
                work,
                input_mb,
                source: SourceKind::StructuredRelational,
                release: 0.0,
                deadline: 0.0,
                priority,
            });
        }
    }

    // Adjacent-layer edges; every non-extract task keeps at least one parent.
    let mut edges = Vec::new();
    for k in 1..NUM_STAGES {
        for &c in &layers[k] {
            let before = edges.len();
            for &p in &layers[k - 1] {
                if rng.random_bool(cfg.edge_prob) {
                    edges.push((p, c));
                }
            }
            if edges.len() == before {
                let p = layers[k - 1][rng.random_range(0..layers[k - 1].len())];
                edges.push((p, c));
            }
        }
    }

    // Extract sources and releases: half the extracts arrive as a batch at
    // t=0, the rest follow per-class Poisson processes.
    let extracts = &layers[0];
    let n_stream = (cfg.stream_fraction * extracts.len() as f64).round() as usize;
    let mut shuffled = extracts.clone();
    shuffled.shuffle(&mut rng);
    for &id in &shuffled[..n_stream] {
        tasks[id].source = SourceKind::SemiStructuredStream;
    }
    let n_batch = extracts.len().div_ceil(2);
    let mut clocks = [0.0f64; 2];
    for &id in &extracts[n_batch..] {
        let class_idx = match tasks[id].source {
            SourceKind::StructuredRelational => 0,
            SourceKind::SemiStructuredStream => 1,
        };
        let rate = cfg.sources[class_idx].arrival_rate;
        if rate > 0.0 {
            let exp = Exp::new(rate).map_err(|e| Error::Config(e.to_string()))?;
            clocks[class_idx] += exp.sample(&mut rng);
            tasks[id].release = clocks[class_idx];
        }
    }

    // Downstream tasks inherit the source of their lowest-id parent.
    let mut parents = vec![usize::MAX; cfg.n_tasks];
    for &(p, c) in &edges {
        parents[c] = parents[c].min(p);
    }
    for layer in &layers[1..] {
        for &id in layer {
            tasks[id].source = tasks[parents[id]].source;
        }
    }

    for t in &mut tasks {
        let est = t.work / cfg.reference_speed + t.input_mb / cfg.reference_bandwidth;
        t.deadline = t.release + cfg.deadline_slack * est;
    }

    Ok(TaskDag {
        format: DAG_FORMAT.to_string(),
        config: Some(cfg.clone()),
        scale_factor: cfg.scale_factor,
        tasks,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_cfg() -> WorkloadConfig {
        WorkloadConfig {
            n_tasks: 5,
            layer_widths: [1; 5],
            edge_prob: 1.0,
            seed: 7,
            ..WorkloadConfig::default()
        }
    }

    fn task(id: usize, stage: Stage) -> Task {
        Task {
            id,
            stage,
            work: 1.0,
            input_mb: 1.0,
            source: SourceKind::StructuredRelational,
            release: 0.0,
            deadline: 10.0,
            priority: 0,
        }
    }

    #[test]
    fn single_width_layers_form_a_chain() {
        let dag = generate_dag(&chain_cfg()).unwrap();
        assert_eq!(dag.len(), 5);
        assert_eq!(dag.edges, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
        let stages: Vec<_> = dag.tasks.iter().map(|t| t.stage).collect();
        assert_eq!(stages, Stage::ALL.to_vec());
        assert_eq!(topological_order(&dag).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let a = generate_dag(&chain_cfg()).unwrap().to_json().unwrap();
        let b = generate_dag(&chain_cfg()).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let big = WorkloadConfig { seed: 99, ..WorkloadConfig::default() };
        assert_eq!(
            generate_dag(&big).unwrap().to_json().unwrap(),
            generate_dag(&big).unwrap().to_json().unwrap()
        );
    }

    #[test]
    fn empty_dag_orders_to_nothing() {
        let dag = TaskDag::from_parts(vec![], vec![]).unwrap();
        assert!(topological_order(&dag).unwrap().is_empty());
    }

    #[test]
    fn diamond_ties_break_by_id() {
        let tasks = vec![
            task(0, Stage::Extract),
            task(1, Stage::Clean),
            task(2, Stage::Clean),
            task(3, Stage::Transform),
        ];
        let dag = TaskDag::from_parts(tasks, vec![(0, 2), (0, 1), (2, 3), (1, 3)]).unwrap();
        assert_eq!(topological_order(&dag).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn cycle_is_a_malformed_workload() {
        let tasks = vec![task(0, Stage::Extract), task(1, Stage::Clean)];
        let dag = TaskDag::from_parts(tasks, vec![(0, 1), (1, 0)]).unwrap();
        assert!(matches!(
            topological_order(&dag),
            Err(Error::MalformedWorkload(_))
        ));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = WorkloadConfig::default();
        cfg.layer_widths[2] = 0;
        assert!(matches!(generate_dag(&cfg), Err(Error::Config(_))));
        let cfg = WorkloadConfig { edge_prob: 1.5, ..WorkloadConfig::default() };
        assert!(matches!(generate_dag(&cfg), Err(Error::Config(_))));
        let cfg = WorkloadConfig { deadline_slack: 1.0, ..WorkloadConfig::default() };
        assert!(matches!(generate_dag(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn layer_sizes_apportion_to_n_tasks() {
        let cfg = WorkloadConfig {
            n_tasks: 37,
            layer_widths: [3, 2, 2, 1, 1],
            ..WorkloadConfig::default()
        };
        let sizes = cfg.layer_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 37);
        assert!(sizes.iter().all(|&s| s >= 1));
        assert!(sizes[0] >= sizes[4]);
    }

    #[test]
    fn extract_batch_and_stream_fraction() {
        let cfg = WorkloadConfig { seed: 3, ..WorkloadConfig::default() };
        let dag = generate_dag(&cfg).unwrap();
        let extracts: Vec<_> = dag.tasks.iter().filter(|t| t.stage == Stage::Extract).collect();
        assert_eq!(extracts.len(), 40);
        let at_zero = extracts.iter().filter(|t| t.release == 0.0).count();
        assert_eq!(at_zero, 20);
        let streams = extracts
            .iter()
            .filter(|t| t.source == SourceKind::SemiStructuredStream)
            .count();
        assert_eq!(streams, 12);
        assert!(dag
            .tasks
            .iter()
            .filter(|t| t.stage != Stage::Extract)
            .all(|t| t.release == 0.0));
    }

    #[test]
    fn json_round_trip_validates() {
        let dag = generate_dag(&WorkloadConfig { seed: 5, ..WorkloadConfig::default() }).unwrap();
        let back = TaskDag::from_json(&dag.to_json().unwrap()).unwrap();
        assert_eq!(back, dag);
    }
}
