//! Scheduling agents: the deep Q-learning agent (optionally Double-DQN), a
//! tabular Q-learning baseline and three learning-free heuristics.

mod dqn;
mod heuristic;
mod replay;
mod tabular;

pub use dqn::{
    epsilon_greedy, greedy_index, select_action, td_targets, AgentCheckpoint, AgentConfig,
    DqnAgent, EpsilonSchedule,
};
pub use heuristic::{Heuristic, HeuristicKind};
pub use replay::{ReplayBuffer, Transition};
pub use tabular::{tabular_q_update, Discretizer, QLearningAgent, QTable};
