//! Discrete-event ETL scheduling simulator framed as an MDP, with a
//! from-scratch deep Q-network agent, tabular and heuristic baselines,
//! scheduling metrics and an experiment harness.

pub mod agents;
pub mod cluster;
pub mod env;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod nn;
pub mod workload;

pub use agents::{
    AgentConfig, DqnAgent, EpsilonSchedule, Heuristic, HeuristicKind, QLearningAgent, ReplayBuffer,
    Transition,
};
pub use cluster::{ClusterSpec, NodeSpec, Simulation, TaskOutcome, TaskStatus};
pub use env::{compute_reward, EnvConfig, EtlEnv, RewardWeights, StepResult};
pub use error::{Error, Result};
pub use metrics::{compare_reports, compute_metrics, EpisodeTrace, MetricsReport};
pub use nn::{Adam, QNetwork};
pub use workload::{generate_dag, Task, TaskDag, WorkloadConfig};
