use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::env::EtlEnv;
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicKind {
    Random,
    RoundRobin,
    LeastLoaded,
}

impl HeuristicKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::RoundRobin => "round-robin",
            Self::LeastLoaded => "least-loaded",
        }
    }
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeuristicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "random" => Ok(Self::Random),
            "round-robin" | "roundrobin" | "rr" => Ok(Self::RoundRobin),
            "least-loaded" | "leastloaded" => Ok(Self::LeastLoaded),
            other => Err(Error::Config(format!("unknown heuristic {other:?}"))),
        }
    }
}

/// Non-learning placement rule. Defers only when no node can take the
/// candidate.
#[derive(Clone, Debug)]
pub struct Heuristic {
    pub kind: HeuristicKind,
    cursor: usize,
}

impl Heuristic {
    pub fn new(kind: HeuristicKind) -> Self {
        Self { kind, cursor: 0 }
    }

    pub fn reset(&mut self) {
        self.cursor = 0;
    }

    pub fn select(&mut self, env: &EtlEnv, rng: &mut impl Rng) -> usize {
        let legal = env.legal_actions();
        let n = env.defer_action();
        let free: Vec<usize> = (0..n).filter(|&k| legal[k]).collect();
        if free.is_empty() {
            return n;
        }
        match self.kind {
            HeuristicKind::Random => free[rng.random_range(0..free.len())],
            HeuristicKind::RoundRobin => {
                let pick = (0..n)
                    .map(|i| (self.cursor + i) % n)
                    .find(|&k| legal[k])
                    .expect("free is non-empty");
                self.cursor = (pick + 1) % n;
                pick
            }
            HeuristicKind::LeastLoaded => {
                let (sim, c) = match (env.sim(), env.candidate()) {
                    (Some(sim), Some(c)) => (sim, c),
                    _ => return free[0],
                };
                // Every dispatch starts now, so the earliest finish is the
                // smallest execution estimate.
                *free
                    .iter()
                    .min_by(|&&a, &&b| {
                        sim.estimate(c, a)
                            .total()
                            .total_cmp(&sim.estimate(c, b).total())
                            .then(a.cmp(&b))
                    })
                    .expect("free is non-empty")
            }
        }
    }
}
