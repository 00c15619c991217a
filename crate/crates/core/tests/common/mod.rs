//! Small deterministic MDPs with value-iteration ground truth.
#![allow(dead_code)]

use etl_sched::agents::{greedy_index, tabular_q_update, AgentConfig, DqnAgent, QTable, Transition};
use etl_sched::nn::Sample;
use etl_sched::QNetwork;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic finite MDP: `step[s][a] = (next, reward, terminal)`.
/// Terminal transitions end the episode; the start state is 0.
#[derive(Clone, Debug)]
pub struct TinyMdp {
    pub step: Vec<Vec<(usize, f64, bool)>>,
    pub gamma: f64,
}

impl TinyMdp {
    pub fn states(&self) -> usize {
        self.step.len()
    }

    pub fn actions(&self) -> usize {
        self.step[0].len()
    }

    /// Iterates the Bellman optimality operator to a fixed point.
    pub fn q_star(&self) -> Vec<Vec<f64>> {
        let (ns, na) = (self.states(), self.actions());
        let mut q = vec![vec![0.0; na]; ns];
        for _ in 0..10_000 {
            let v: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::MIN, f64::max)).collect();
            let mut delta: f64 = 0.0;
            for s in 0..ns {
                for a in 0..na {
                    let (s2, r, term) = self.step[s][a];
                    let new = if term { r } else { r + self.gamma * v[s2] };
                    delta = delta.max((new - q[s][a]).abs());
                    q[s][a] = new;
                }
            }
            if delta < 1e-13 {
                break;
            }
        }
        q
    }

    pub fn optimal_policy(&self) -> Vec<usize> {
        self.q_star().iter().map(|row| greedy_index(row, None)).collect()
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.states()];
        v[s] = 1.0;
        v
    }
}

/// s0 --go--> s1 pays 1; staying in s0 pays 0; s1 is absorbing with zero
/// reward.
pub fn two_state() -> TinyMdp {
    TinyMdp {
        step: vec![vec![(0, 0.0, false), (1, 1.0, false)], vec![(1, 0.0, false), (1, 0.0, false)]],
        gamma: 0.5,
    }
}

/// Five-state corridor. Action 0 moves left (staying put in s0), action 1
/// moves right, action 2 waits; left and wait cost 0.05. Stepping right out
/// of s4 pays 1 and ends the episode; stepping right from s2 costs 0.1.
pub fn five_state() -> TinyMdp {
    let mut step = Vec::new();
    for s in 0..5usize {
        let left = (s.saturating_sub(1), -0.05, false);
        let right = match s {
            4 => (4, 1.0, true),
            2 => (3, -0.1, false),
            _ => (s + 1, 0.0, false),
        };
        step.push(vec![left, right, (s, -0.05, false)]);
    }
    TinyMdp { step, gamma: 0.9 }
}

/// Q-learning with uniform exploration from uniformly drawn start states.
pub fn train_tabular(mdp: &TinyMdp, updates: usize, alpha: f64, seed: u64) -> QTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = QTable::new(mdp.states(), mdp.actions());
    for _ in 0..updates {
        let s = rng.random_range(0..mdp.states());
        let a = rng.random_range(0..mdp.actions());
        let (s2, r, term) = mdp.step[s][a];
        let next = (!term).then_some((s2, None));
        tabular_q_update(&mut table, s, a, r, next, alpha, mdp.gamma);
    }
    table
}

/// DQN on one-hot states; episodes restart from a random state after a
/// terminal transition or every `episode_len` steps.
pub fn train_dqn(mdp: &TinyMdp, steps: usize, seed: u64) -> DqnAgent {
    let cfg = AgentConfig {
        gamma: mdp.gamma,
        lr: 1e-2,
        epsilon_start: 1.0,
        epsilon_end: 0.1,
        epsilon_decay_steps: steps as u64 / 2,
        batch_size: 32,
        target_sync_interval: 25,
        buffer_capacity: 10_000,
        warmup_transitions: 32,
        hidden1: 16,
        hidden2: 16,
        ..AgentConfig::default()
    };
    let mut agent = DqnAgent::new(cfg, mdp.states(), mdp.actions(), seed).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let episode_len = 4 * mdp.states();
    let mut s = 0;
    let mut t = 0;
    for _ in 0..steps {
        let x = mdp.one_hot(s);
        let a = agent.act(&x, None).expect("action");
        let (s2, r, term) = mdp.step[s][a];
        agent
            .train_step(Transition {
                s: x,
                a,
                r,
                s_next: mdp.one_hot(s2),
                terminal: term,
                next_legal: None,
            })
            .expect("train step");
        t += 1;
        if term || t >= episode_len {
            s = rng.random_range(0..mdp.states());
            t = 0;
        } else {
            s = s2;
        }
    }
    agent
}

pub fn dqn_policy(mdp: &TinyMdp, agent: &DqnAgent) -> Vec<usize> {
    (0..mdp.states())
        .map(|s| agent.greedy(&mdp.one_hot(s), None).expect("greedy"))
        .collect()
}

/// States where `policy` picks an action outside the optimal set. States
/// with tied optimal actions accept any of them.
pub fn policy_mistakes(mdp: &TinyMdp, policy: &[usize]) -> Vec<usize> {
    let q = mdp.q_star();
    (0..mdp.states())
        .filter(|&s| {
            let best = q[s].iter().cloned().fold(f64::MIN, f64::max);
            q[s][policy[s]] < best - 1e-9
        })
        .collect()
}

/// Straight-line re-evaluation of the network's squared TD loss, written
/// against the weight accessors rather than the packed forward pass.
pub fn reference_loss(net: &QNetwork, batch: &[(Vec<f64>, usize, f64)]) -> f64 {
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut total = 0.0;
    for (s, a, y) in batch {
        let r: Vec<f64> = (0..net.hidden1)
            .map(|i| {
                let z: f64 = net.params.b1[i] + (0..net.input).map(|j| net.weight(1, i, j) * s[j]).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        let h: Vec<f64> = (0..net.hidden2)
            .map(|i| {
                let z: f64 = net.params.b2[i] + (0..net.hidden1).map(|j| net.weight(2, i, j) * r[j]).sum::<f64>();
                sigmoid(z)
            })
            .collect();
        let q = net.params.b3[*a] + (0..net.hidden2).map(|j| net.weight(3, *a, j) * h[j]).sum::<f64>();
        total += (y - q) * (y - q);
    }
    total / batch.len() as f64
}

/// Central-difference gradient of [`reference_loss`] compared against the
/// analytic backward pass; max of |analytic - numeric| / max(1, |numeric|).
pub fn fd_gradient_error(net: &QNetwork, batch: &[(Vec<f64>, usize, f64)], h: f64) -> f64 {
    let samples: Vec<Sample<'_>> = batch
        .iter()
        .map(|(s, a, y)| Sample {
            state: s,
            action: *a,
            target: *y,
        })
        .collect();
    let (_, analytic) = net.backward(&samples).expect("backward");
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for t in 0..6 {
        for i in 0..analytic.tensors()[t].len() {
            let orig = probe.params.tensors()[t][i];
            probe.params.tensors_mut()[t][i] = orig + h;
            let up = reference_loss(&probe, batch);
            probe.params.tensors_mut()[t][i] = orig - h;
            let down = reference_loss(&probe, batch);
            probe.params.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((analytic.tensors()[t][i] - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    worst
}

/// Random network and batch within the given size bounds.
pub fn random_instance(seed: u64, max: (usize, usize, usize, usize), batch: usize) -> (QNetwork, Vec<(Vec<f64>, usize, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=max.0);
    let h1 = rng.random_range(1..=max.1);
    let h2 = rng.random_range(1..=max.2);
    let a = rng.random_range(1..=max.3);
    let net = QNetwork::init(d, h1, h2, a, &mut rng);
    let samples = (0..batch)
        .map(|_| {
            let s: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            (s, rng.random_range(0..a), rng.random_range(-2.0..2.0))
        })
        .collect();
    (net, samples)
}
