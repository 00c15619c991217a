//! Discrete-event simulation of a heterogeneous cluster running an ETL DAG.
//!
//! Execution time on a node is additive: coordination overhead, then an I/O
//! phase (local input read plus cross-node transfer of parent outputs), then
//! compute. The coordination overhead grows linearly with the node count and
//! is paid before the task starts, so it shows up in scheduling delay.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::{Task, TaskDag};

pub const DEFAULT_PROFILE: &str = "default-hetero-v1";
pub const DEFAULT_COORD_BASE: f64 = 0.05;
pub const DEFAULT_COORD_PER_NODE: f64 = 0.15;

/// Mean profile speed; a node at this speed pays its price per compute unit.
const PROFILE_REFERENCE_SPEED: f64 = 2.5;

/// Per-slot memory of nodes drawn from the default profile (MB).
const PROFILE_MEM_PER_SLOT: f64 = 128.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: usize,
    pub speed: f64,
    pub bandwidth: f64,
    pub mem_capacity: f64,
    pub slots: usize,
    pub cost_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub nodes: Vec<NodeSpec>,
    pub coord_base: f64,
    pub coord_per_node: f64,
}

impl ClusterSpec {
    /// Draws `n` nodes from a named heterogeneity profile.
    ///
    /// `default-hetero-v1`: speed U[1,4], bandwidth U[5,20] MB/s, slots from
    /// {1,2,4}, 128 MB of memory per slot, and a per-second price U[0.5,1.5]
    /// that becomes a cost rate of `price × 2.5 / speed` per compute unit.
    pub fn from_profile(profile: &str, n: usize, seed: u64) -> Result<Self> {
        if profile != DEFAULT_PROFILE {
            return Err(Error::Config(format!(
                "unknown cluster profile {profile:?} (known: {DEFAULT_PROFILE})"
            )));
        }
        if n == 0 {
            return Err(Error::Config("cluster needs at least one node".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = (0..n)
            .map(|id| {
                let speed = rng.random_range(1.0..=4.0);
                let bandwidth = rng.random_range(5.0..=20.0);
                let slots = [1, 2, 4][rng.random_range(0..3)];
                // Billing is per slot-second; per compute unit that is the
                // price divided by speed.
                let price: f64 = rng.random_range(0.5..=1.5);
                let cost_rate = price * PROFILE_REFERENCE_SPEED / speed;
                NodeSpec {
                    id,
                    speed,
                    bandwidth,
                    mem_capacity: PROFILE_MEM_PER_SLOT * slots as f64,
                    slots,
                    cost_rate,
                }
            })
            .collect();
        let spec = Self {
            nodes,
            coord_base: DEFAULT_COORD_BASE,
            coord_per_node: DEFAULT_COORD_PER_NODE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Config("cluster needs at least one node".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Config(format!("node ids must be dense; slot {i} has id {}", n.id)));
            }
            let positive = n.speed > 0.0 && n.bandwidth > 0.0 && n.mem_capacity > 0.0;
            if !positive || n.slots == 0 || !(n.cost_rate >= 0.0) {
                return Err(Error::Config(format!("node {i} has a non-positive capacity")));
            }
        }
        if !(self.coord_base >= 0.0 && self.coord_per_node >= 0.0) {
            return Err(Error::Config("coordination overhead terms must be >= 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn coordination_overhead(&self) -> f64 {
        self.coord_base + self.coord_per_node * self.nodes.len() as f64
    }

    pub fn mean_speed(&self) -> f64 {
        self.nodes.iter().map(|n| n.speed).sum::<f64>() / self.nodes.len() as f64
    }

    pub fn mean_bandwidth(&self) -> f64 {
        self.nodes.iter().map(|n| n.bandwidth).sum::<f64>() / self.nodes.len() as f64
    }

    pub fn mean_cost_rate(&self) -> f64 {
        self.nodes.iter().map(|n| n.cost_rate).sum::<f64>() / self.nodes.len() as f64
    }
}

/// Location and size of one parent's output as seen by a consumer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParentData {
    pub node: usize,
    pub mb: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExecEstimate {
    pub coordination: f64,
    pub io: f64,
    pub compute: f64,
}

impl ExecEstimate {
    pub fn total(&self) -> f64 {
        self.coordination + self.io + self.compute
    }
}

/// Phase breakdown of running `task` on `node`. Parents on other nodes ship
/// their output over the destination node's link.
pub fn exec_breakdown(
    task: &Task,
    node: &NodeSpec,
    parents: &[ParentData],
    cluster: &ClusterSpec,
) -> ExecEstimate {
    let transfer: f64 = parents
        .iter()
        .filter(|p| p.node != node.id)
        .map(|p| p.mb / node.bandwidth)
        .sum();
    ExecEstimate {
        coordination: cluster.coordination_overhead(),
        io: task.input_mb / node.bandwidth + transfer,
        compute: task.work / node.speed,
    }
}

pub fn estimate_exec_time(
    task: &Task,
    node: &NodeSpec,
    parents: &[ParentData],
    cluster: &ClusterSpec,
) -> f64 {
    exec_breakdown(task, node, parents, cluster).total()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    TaskRelease,
    TaskFinish,
    TransferFinish,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub task: usize,
    pub node: Option<usize>,
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskStatus {
    Pending,
    Ready,
    Running,
    Completed,
    MissedDeadline,
    Unfinished,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            TaskStatus::Completed | TaskStatus::MissedDeadline | TaskStatus::Unfinished
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskRuntime {
    pub status: TaskStatus,
    pub release: Option<f64>,
    pub deadline: Option<f64>,
    pub dispatch: Option<f64>,
    pub start: Option<f64>,
    pub finish: Option<f64>,
    pub node: Option<usize>,
    pub cost: f64,
    remaining_parents: usize,
    /// Finish time fixed at dispatch.
    due: Option<f64>,
}

/// Outcome of a task reaching a terminal status.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task: usize,
    pub status: TaskStatus,
    /// 1 iff finished no later than its deadline.
    pub success: bool,
    /// finish - release (horizon - release for unfinished tasks).
    pub latency: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeLoad {
    pub busy_slots: usize,
    pub mem_used: f64,
    pub transfers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterState {
    pub nodes: Vec<NodeLoad>,
    pub sim_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Advance {
    pub fired: Vec<SimEvent>,
    pub finalized: Vec<TaskOutcome>,
}

/// Sequential simulation of one episode.
#[derive(Clone, Debug)]
pub struct Simulation {
    dag: Arc<TaskDag>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    edge_mb: Vec<f64>,
    cluster: ClusterSpec,
    state: ClusterState,
    tasks: Vec<TaskRuntime>,
    ready: Vec<usize>,
    queue: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
    horizon: f64,
    terminal: bool,
    finalized: usize,
    trace: Vec<SimEvent>,
}

impl Simulation {
    pub fn new(dag: Arc<TaskDag>, cluster: ClusterSpec, horizon: f64) -> Result<Self> {
        cluster.validate()?;
        dag.validate()?;
        if !(horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let parents = dag.parents();
        let children = dag.children();
        let edge_mb = dag
            .tasks
            .iter()
            .map(|t| t.input_mb / children[t.id].len().max(1) as f64)
            .collect();
        let tasks = parents
            .iter()
            .map(|p| TaskRuntime {
                status: TaskStatus::Pending,
                release: None,
                deadline: None,
                dispatch: None,
                start: None,
                finish: None,
                node: None,
                cost: 0.0,
                remaining_parents: p.len(),
                due: None,
            })
            .collect();
        let state = ClusterState {
            nodes: vec![NodeLoad::default(); cluster.len()],
            sim_time: 0.0,
        };
        let mut sim = Self {
            dag,
            parents,
            children,
            edge_mb,
            cluster,
            state,
            tasks,
            ready: Vec::new(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            horizon,
            terminal: false,
            finalized: 0,
            trace: Vec::new(),
        };
        for id in 0..sim.dag.len() {
            if sim.parents[id].is_empty() {
                let at = sim.dag.tasks[id].release;
                sim.push_event(at, EventKind::TaskRelease, id, None);
            }
        }
        if sim.dag.is_empty() {
            sim.terminal = true;
        }
        Ok(sim)
    }

    fn push_event(&mut self, time: f64, kind: EventKind, task: usize, node: Option<usize>) {
        let ev = SimEvent {
            time,
            seq: self.next_seq,
            kind,
            task,
            node,
        };
        self.next_seq += 1;
        self.queue.push(Reverse(ev));
    }

    pub fn dag(&self) -> &TaskDag {
        &self.dag
    }

    pub fn cluster(&self) -> &ClusterSpec {
        &self.cluster
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    pub fn now(&self) -> f64 {
        self.state.sim_time
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn task(&self, id: usize) -> &TaskRuntime {
        &self.tasks[id]
    }

    pub fn tasks(&self) -> &[TaskRuntime] {
        &self.tasks
    }

    pub fn parents_of(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    /// Ready task ids, in no particular order.
    pub fn ready(&self) -> &[usize] {
        &self.ready
    }

    pub fn next_event_time(&self) -> Option<f64> {
        self.queue.peek().map(|Reverse(e)| e.time)
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Every event fired so far, in processing order.
    pub fn trace(&self) -> &[SimEvent] {
        &self.trace
    }

    /// Ready task with the earliest release, lowest id on ties.
    pub fn candidate(&self) -> Option<usize> {
        self.ready.iter().copied().min_by(|&a, &b| {
            let ra = self.tasks[a].release.unwrap_or(0.0);
            let rb = self.tasks[b].release.unwrap_or(0.0);
            ra.total_cmp(&rb).then(a.cmp(&b))
        })
    }

    pub fn parent_data(&self, id: usize) -> Vec<ParentData> {
        self.parents[id]
            .iter()
            .filter_map(|&p| {
                self.tasks[p].node.map(|node| ParentData {
                    node,
                    mb: self.edge_mb[p],
                })
            })
            .collect()
    }

    pub fn estimate(&self, task: usize, node: usize) -> ExecEstimate {
        exec_breakdown(
            &self.dag.tasks[task],
            &self.cluster.nodes[node],
            &self.parent_data(task),
            &self.cluster,
        )
    }

    /// Whether `task` could be placed on `node` right now.
    pub fn can_assign(&self, task: usize, node: usize) -> bool {
        let Some(spec) = self.cluster.nodes.get(node) else {
            return false;
        };
        let load = &self.state.nodes[node];
        self.tasks.get(task).map(|t| t.status) == Some(TaskStatus::Ready)
            && load.busy_slots < spec.slots
            && load.mem_used + self.dag.tasks[task].input_mb <= spec.mem_capacity
    }

    /// A ready task exists and at least one node can take the candidate.
    pub fn at_decision_point(&self) -> bool {
        match self.candidate() {
            Some(c) => (0..self.cluster.len()).any(|n| self.can_assign(c, n)),
            None => false,
        }
    }

    /// Dispatches a ready task; returns its scheduled finish time.
    pub fn assign(&mut self, task: usize, node: usize) -> Result<f64> {
        if self.terminal {
            return Err(Error::Usage("assign after episode end".into()));
        }
        if node >= self.cluster.len() {
            return Err(Error::AssignmentRejected(format!("no node {node}")));
        }
        if self.tasks.get(task).map(|t| t.status) != Some(TaskStatus::Ready) {
            return Err(Error::AssignmentRejected(format!("task {task} is not ready")));
        }
        let spec = &self.cluster.nodes[node];
        let load = &self.state.nodes[node];
        if load.busy_slots >= spec.slots {
            return Err(Error::AssignmentRejected(format!("node {node} has no free slot")));
        }
        let input_mb = self.dag.tasks[task].input_mb;
        if load.mem_used + input_mb > spec.mem_capacity {
            return Err(Error::AssignmentRejected(format!(
                "node {node} lacks memory for task {task}"
            )));
        }

        let est = self.estimate(task, node);
        let now = self.state.sim_time;
        let start = now + est.coordination;
        let finish = now + est.total();
        let cost = self.dag.tasks[task].work * spec.cost_rate;

        let load = &mut self.state.nodes[node];
        load.busy_slots += 1;
        load.mem_used += input_mb;
        load.transfers += 1;

        let rt = &mut self.tasks[task];
        rt.status = TaskStatus::Running;
        rt.dispatch = Some(now);
        rt.start = Some(start);
        rt.node = Some(node);
        rt.cost = cost;
        rt.due = Some(finish);
        self.ready.retain(|&t| t != task);

        self.push_event(start + est.io, EventKind::TransferFinish, task, Some(node));
        self.push_event(finish, EventKind::TaskFinish, task, Some(node));
        Ok(finish)
    }

    /// Outcome a placed task will finalize with. Service times are fixed at
    /// dispatch, so this is known as soon as the task is running; a finish
    /// past the horizon means it will be cut as unfinished.
    pub fn committed_outcome(&self, task: usize) -> Option<TaskOutcome> {
        let rt = self.tasks.get(task)?;
        let finish = rt.due?;
        let release = rt.release.unwrap_or(0.0);
        Some(if finish <= self.horizon {
            let success = finish <= rt.deadline.unwrap_or(f64::INFINITY);
            TaskOutcome {
                task,
                status: if success {
                    TaskStatus::Completed
                } else {
                    TaskStatus::MissedDeadline
                },
                success,
                latency: finish - release,
                cost: rt.cost,
            }
        } else {
            TaskOutcome {
                task,
                status: TaskStatus::Unfinished,
                success: false,
                latency: (self.horizon - release).max(0.0),
                cost: rt.cost,
            }
        })
    }

    /// Jumps to the next event time and fires every event scheduled there.
    ///
    /// Returns an empty advance without moving time when nothing is queued
    /// but ready tasks are waiting for a decision.
    pub fn advance_to_next_event(&mut self) -> Result<Advance> {
        if self.terminal {
            return Err(Error::Usage("advance after episode end".into()));
        }
        let mut out = Advance::default();
        let Some(Reverse(next)) = self.queue.peek().copied() else {
            if self.ready.is_empty() {
                return Err(Error::Deadlock {
                    time: self.state.sim_time,
                    unfinished: self.dag.len() - self.finalized,
                });
            }
            return Ok(out);
        };
        if next.time > self.horizon {
            self.state.sim_time = self.horizon.max(self.state.sim_time);
            self.cut_at_horizon(&mut out);
            return Ok(out);
        }
        self.state.sim_time = next.time;
        while let Some(Reverse(ev)) = self.queue.peek().copied() {
            if ev.time != next.time {
                break;
            }
            self.queue.pop();
            self.fire(ev, &mut out);
        }
        if self.finalized == self.dag.len() {
            self.terminal = true;
        }
        Ok(out)
    }

    fn fire(&mut self, ev: SimEvent, out: &mut Advance) {
        let now = ev.time;
        match ev.kind {
            EventKind::TaskRelease => {
                let window = self.dag.tasks[ev.task].deadline_window();
                let rt = &mut self.tasks[ev.task];
                rt.status = TaskStatus::Ready;
                rt.release = Some(now);
                rt.deadline = Some(now + window);
                self.ready.push(ev.task);
            }
            EventKind::TransferFinish => {
                let node = ev.node.expect("transfer event carries a node");
                self.state.nodes[node].transfers -= 1;
            }
            EventKind::TaskFinish => {
                let node = ev.node.expect("finish event carries a node");
                let load = &mut self.state.nodes[node];
                load.busy_slots -= 1;
                load.mem_used = (load.mem_used - self.dag.tasks[ev.task].input_mb).max(0.0);

                let rt = &mut self.tasks[ev.task];
                let release = rt.release.unwrap_or(0.0);
                let success = now <= rt.deadline.unwrap_or(f64::INFINITY);
                rt.finish = Some(now);
                rt.status = if success {
                    TaskStatus::Completed
                } else {
                    TaskStatus::MissedDeadline
                };
                self.finalized += 1;
                out.finalized.push(TaskOutcome {
                    task: ev.task,
                    status: rt.status,
                    success,
                    latency: now - release,
                    cost: rt.cost,
                });
                for i in 0..self.children[ev.task].len() {
                    let c = self.children[ev.task][i];
                    self.tasks[c].remaining_parents -= 1;
                    if self.tasks[c].remaining_parents == 0 {
                        self.push_event(now, EventKind::TaskRelease, c, None);
                    }
                }
            }
        }
        self.trace.push(ev);
        out.fired.push(ev);
    }

    fn cut_at_horizon(&mut self, out: &mut Advance) {
        let horizon = self.state.sim_time;
        for (id, rt) in self.tasks.iter_mut().enumerate() {
            if rt.status.is_terminal() {
                continue;
            }
            let release = rt.release.unwrap_or(self.dag.tasks[id].release);
            let cost = if rt.status == TaskStatus::Running { rt.cost } else { 0.0 };
            rt.status = TaskStatus::Unfinished;
            out.finalized.push(TaskOutcome {
                task: id,
                status: TaskStatus::Unfinished,
                success: false,
                latency: (horizon - release).max(0.0),
                cost,
            });
        }
        self.finalized = self.dag.len();
        self.ready.clear();
        self.queue.clear();
        self.terminal = true;
    }

    /// Number of ready tasks with at least one parent output on `node`.
    pub fn local_backlog(&self, node: usize) -> usize {
        self.ready
            .iter()
            .filter(|&&t| self.parents[t].iter().any(|&p| self.tasks[p].node == Some(node)))
            .count()
    }

    pub fn status_counts(&self) -> StatusCounts {
        let mut c = StatusCounts::default();
        for rt in &self.tasks {
            match rt.status {
                TaskStatus::Completed => c.completed += 1,
                TaskStatus::MissedDeadline => c.missed_deadline += 1,
                TaskStatus::Unfinished => c.unfinished += 1,
                _ => c.in_flight += 1,
            }
        }
        c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub completed: usize,
    pub missed_deadline: usize,
    pub unfinished: usize,
    pub in_flight: usize,
}

impl StatusCounts {
    pub fn terminal_total(&self) -> usize {
        self.completed + self.missed_deadline + self.unfinished
    }
}

/// One JSON object per line: time, seq, kind, task, node.
pub fn trace_to_jsonl(events: &[SimEvent]) -> Result<String> {
    let mut out = String::new();
    for ev in events {
        out.push_str(&serde_json::to_string(ev)?);
        out.push('\n');
    }
    Ok(out)
}
