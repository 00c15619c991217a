use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::nn::{Adam, Checkpoint, Embedding, QNetwork, Sample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which epsilon decays linearly.
    pub epsilon_decay_steps: u64,
    pub batch_size: usize,
    /// Gradient steps between hard copies of the online network.
    pub target_sync_interval: u64,
    pub buffer_capacity: usize,
    pub double_dqn: bool,
    pub warmup_transitions: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub embedding: Embedding,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.93,
            lr: 5e-4,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 20_000,
            batch_size: 64,
            target_sync_interval: 500,
            buffer_capacity: 50_000,
            double_dqn: false,
            warmup_transitions: 1_000,
            hidden1: 64,
            hidden2: 32,
            embedding: Embedding::Sigmoid,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start) || !unit.contains(&self.epsilon_end) {
            return Err(Error::Config("epsilon bounds must lie in [0,1]".into()));
        }
        if self.epsilon_end > self.epsilon_start {
            return Err(Error::Config("epsilon_end must not exceed epsilon_start".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.target_sync_interval == 0 {
            return Err(Error::Config(
                "batch_size, buffer_capacity and target_sync_interval must be positive".into(),
            ));
        }
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay_steps: self.epsilon_decay_steps,
        }
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, then constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Highest value among legal entries, lowest index on ties.
pub fn greedy_index(q: &[f64], legal: Option<&[bool]>) -> usize {
    let mut best: Option<usize> = None;
    for (i, &v) in q.iter().enumerate() {
        if legal.is_some_and(|l| !l[i]) {
            continue;
        }
        match best {
            Some(b) if q[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best.unwrap_or(0)
}

/// With probability `epsilon` a uniform legal action, otherwise the greedy one.
pub fn epsilon_greedy(q: &[f64], legal: Option<&[bool]>, epsilon: f64, rng: &mut impl Rng) -> usize {
    if rng.random::<f64>() < epsilon {
        let options: Vec<usize> = (0..q.len()).filter(|&i| legal.is_none_or(|l| l[i])).collect();
        if options.is_empty() {
            return 0;
        }
        return options[rng.random_range(0..options.len())];
    }
    greedy_index(q, legal)
}

pub fn select_action(
    net: &QNetwork,
    s: &[f64],
    legal: Option<&[bool]>,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    let q = net.q_values(s)?;
    Ok(epsilon_greedy(&q, legal, epsilon, rng))
}

/// Bootstrapped regression targets. Terminal transitions use `r` alone;
/// otherwise the target network evaluates either its own argmax or, for
/// Double-DQN, the online network's argmax.
pub fn td_targets(
    batch: &[&Transition],
    target: &QNetwork,
    online: &QNetwork,
    gamma: f64,
    double_dqn: bool,
) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                return Ok(t.r);
            }
            let legal = t.next_legal.as_deref();
            let q_next = target.q_values(&t.s_next)?;
            let a_next = if double_dqn {
                greedy_index(&online.q_values(&t.s_next)?, legal)
            } else {
                greedy_index(&q_next, legal)
            };
            Ok(t.r + gamma * q_next[a_next])
        })
        .collect()
}

/// Deep Q-learning agent with experience replay and a hard-synced target
/// network.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    cfg: AgentConfig,
    online: QNetwork,
    target: QNetwork,
    opt: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: u64,
    grad_steps: u64,
}

impl DqnAgent {
    pub fn new(cfg: AgentConfig, state_dim: usize, actions: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut online = QNetwork::init(state_dim, cfg.hidden1, cfg.hidden2, actions, &mut rng);
        online.embedding = cfg.embedding;
        let target = online.clone();
        let opt = Adam::new(&online, cfg.lr);
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg,
            online,
            target,
            opt,
            rng,
            env_steps: 0,
            grad_steps: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.schedule().at(self.env_steps)
    }

    /// Exploratory action at the current epsilon.
    pub fn act(&mut self, s: &[f64], legal: Option<&[bool]>) -> Result<usize> {
        let eps = self.epsilon();
        select_action(&self.online, s, legal, eps, &mut self.rng)
    }

    pub fn greedy(&self, s: &[f64], legal: Option<&[bool]>) -> Result<usize> {
        Ok(greedy_index(&self.online.q_values(s)?, legal))
    }

    /// Stores the transition and, once past warmup, takes one gradient step.
    /// Returns the batch loss when a step was taken.
    pub fn train_step(&mut self, t: Transition) -> Result<Option<f64>> {
        if t.a >= self.online.actions || !t.r.is_finite() {
            return Err(Error::Usage(format!(
                "invalid transition: action {} reward {}",
                t.a, t.r
            )));
        }
        self.buffer.push(t);
        self.env_steps += 1;
        if self.buffer.len() < self.cfg.warmup_transitions.max(1) {
            return Ok(None);
        }
        let idx = self.buffer.sample_indices(self.cfg.batch_size, &mut self.rng);
        let batch: Vec<&Transition> = idx.iter().map(|&i| self.buffer.get(i)).collect();
        let targets = td_targets(
            &batch,
            &self.target,
            &self.online,
            self.cfg.gamma,
            self.cfg.double_dqn,
        )?;
        let samples: Vec<Sample> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &y)| Sample {
                state: &t.s,
                action: t.a,
                target: y,
            })
            .collect();
        let (loss, grads) = self.online.backward(&samples).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!(
                "{msg} (gradient step {}, env step {})",
                self.grad_steps, self.env_steps
            )),
            other => other,
        })?;
        self.opt.apply(&mut self.online, &grads)?;
        self.grad_steps += 1;
        if self.grad_steps.is_multiple_of(self.cfg.target_sync_interval) {
            self.target.copy_from(&self.online);
        }
        Ok(Some(loss))
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            format: "agent-v1".to_string(),
            config: self.cfg.clone(),
            epsilon: self.epsilon(),
            env_steps: self.env_steps,
            grad_steps: self.grad_steps,
            network: self.online.to_checkpoint(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format: String,
    pub config: AgentConfig,
    pub epsilon: f64,
    pub env_steps: u64,
    pub grad_steps: u64,
    pub network: Checkpoint,
}
