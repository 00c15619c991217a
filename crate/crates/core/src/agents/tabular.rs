use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dqn::{epsilon_greedy, greedy_index, EpsilonSchedule};
use crate::env::{EtlEnv, FLOW_FEATURES};

/// Dense state × action table.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub states: usize,
    pub actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    /// max over (optionally masked) actions; 0 when every action is masked.
    pub fn max_value(&self, s: usize, legal: Option<&[bool]>) -> f64 {
        let row = self.row(s);
        if legal.is_some_and(|l| !l.iter().any(|&x| x)) {
            return 0.0;
        }
        row[greedy_index(row, legal)]
    }
}

/// One Q-learning backup. `next` is `None` for terminal transitions.
pub fn tabular_q_update(
    table: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    next: Option<(usize, Option<&[bool]>)>,
    alpha: f64,
    gamma: f64,
) {
    let bootstrap = next.map_or(0.0, |(s2, legal)| table.max_value(s2, legal));
    let q = table.get(s, a);
    table.set(s, a, q + alpha * (r + gamma * bootstrap - q));
}

pub const DISCRETE_FEATURES: usize = 6;
pub const BUCKETS: usize = 3;

/// Maps an observation to one of 3^6 buckets. Features, each already in
/// [0,1] and cut at 1/3 and 2/3:
///
/// | # | feature                                   |
/// |---|-------------------------------------------|
/// | 0 | candidate work (normalised)               |
/// | 1 | candidate input size                      |
/// | 2 | candidate DAG depth                       |
/// | 3 | mean remaining slack of ready tasks       |
/// | 4 | mean busy-slot fraction across nodes      |
/// | 5 | fraction of nodes with a free slot        |
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Discretizer {
    pub nodes: usize,
}

impl Discretizer {
    pub fn new(nodes: usize) -> Self {
        Self { nodes }
    }

    pub fn num_states(&self) -> usize {
        BUCKETS.pow(DISCRETE_FEATURES as u32)
    }

    pub fn features(&self, s: &[f64]) -> [f64; DISCRETE_FEATURES] {
        let n = self.nodes.max(1);
        let busy: Vec<f64> = (0..self.nodes).map(|k| s[8 + 4 * k]).collect();
        let mean_busy = busy.iter().sum::<f64>() / n as f64;
        let free = busy.iter().filter(|&&b| b < 1.0).count() as f64 / n as f64;
        debug_assert_eq!(s.len(), 8 + 4 * self.nodes + FLOW_FEATURES);
        [s[0], s[1], s[2], s[7], mean_busy, free]
    }

    pub fn bucket(x: f64) -> usize {
        ((x.clamp(0.0, 1.0) * BUCKETS as f64) as usize).min(BUCKETS - 1)
    }

    pub fn index(&self, s: &[f64]) -> usize {
        self.features(s)
            .iter()
            .fold(0, |acc, &x| acc * BUCKETS + Self::bucket(x))
    }
}

/// Tabular Q-learning over the discretised observation.
#[derive(Clone, Debug)]
pub struct QLearningAgent {
    pub table: QTable,
    pub discretizer: Discretizer,
    pub alpha: f64,
    pub gamma: f64,
    pub schedule: EpsilonSchedule,
    steps: u64,
    rng: ChaCha8Rng,
}

impl QLearningAgent {
    pub fn new(env: &EtlEnv, alpha: f64, gamma: f64, schedule: EpsilonSchedule, seed: u64) -> Self {
        let discretizer = Discretizer::new(env.cluster().len());
        Self {
            table: QTable::new(discretizer.num_states(), env.num_actions()),
            discretizer,
            alpha,
            gamma,
            schedule,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn act(&mut self, s: &[f64], legal: &[bool]) -> usize {
        let eps = self.schedule.at(self.steps);
        let idx = self.discretizer.index(s);
        let row = self.table.row(idx).to_vec();
        epsilon_greedy(&row, Some(legal), eps, &mut self.rng)
    }

    pub fn greedy(&self, s: &[f64], legal: &[bool]) -> usize {
        greedy_index(self.table.row(self.discretizer.index(s)), Some(legal))
    }

    pub fn observe(&mut self, s: &[f64], a: usize, r: f64, s_next: &[f64], terminal: bool, next_legal: &[bool]) {
        let si = self.discretizer.index(s);
        let next = (!terminal).then(|| (self.discretizer.index(s_next), Some(next_legal)));
        tabular_q_update(&mut self.table, si, a, r, next, self.alpha, self.gamma);
        self.steps += 1;
    }

    pub fn rng(&mut self) -> &mut impl Rng {
        &mut self.rng
    }
}
