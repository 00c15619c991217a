use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{AgentConfig, HeuristicKind};
use crate::cluster::{ClusterSpec, DEFAULT_PROFILE};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::workload::WorkloadConfig;

pub const CONFIG_FORMAT: &str = "runcfg-v1";

/// Default root for run artifacts when no output directory is given.
pub const OUTPUT_ROOT_ENV: &str = "ETLSCHED_OUT";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for one random stream of one run: the master seed, the FNV-1a hash
/// of the stream name and the run index are folded in turn through
/// splitmix64.
pub fn derive_run_seed(master: u64, stream: &str, index: u64) -> u64 {
    let h = splitmix64(master);
    let h = splitmix64(h ^ fnv1a64(stream));
    splitmix64(h ^ index)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub profile: String,
    pub nodes: usize,
    /// Seed of the profile draw; fixed so every run sees the same cluster.
    pub seed: u64,
    pub coord_base: Option<f64>,
    pub coord_per_node: Option<f64>,
    /// Explicit node list; overrides the profile when present.
    pub spec: Option<ClusterSpec>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            profile: DEFAULT_PROFILE.to_string(),
            nodes: 8,
            seed: 7,
            coord_base: None,
            coord_per_node: None,
            spec: None,
        }
    }
}

impl ClusterConfig {
    pub fn build(&self) -> Result<ClusterSpec> {
        let mut spec = match &self.spec {
            Some(s) => s.clone(),
            None => ClusterSpec::from_profile(&self.profile, self.nodes, self.seed)?,
        };
        if let Some(b) = self.coord_base {
            spec.coord_base = b;
        }
        if let Some(p) = self.coord_per_node {
            spec.coord_per_node = p;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularConfig {
    pub alpha: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self { alpha: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format: String,
    pub workload: WorkloadConfig,
    pub cluster: ClusterConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub tabular: TabularConfig,
    /// Training episodes per seed.
    pub episodes: usize,
    /// Greedy evaluation episodes per seed; metrics come from these only.
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format: CONFIG_FORMAT.to_string(),
            workload: WorkloadConfig::default(),
            cluster: ClusterConfig::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            tabular: TabularConfig::default(),
            episodes: 300,
            eval_episodes: 20,
            seeds: vec![42],
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format != CONFIG_FORMAT {
            return Err(Error::Config(format!(
                "unsupported config format {:?}, expected {CONFIG_FORMAT:?}",
                self.format
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.episodes == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("episodes and eval_episodes must be ≥ 1".into()));
        }
        if !(self.tabular.alpha > 0.0 && self.tabular.alpha <= 1.0) {
            return Err(Error::Config("tabular.alpha must be in (0,1]".into()));
        }
        self.workload.validate()?;
        self.env.validate()?;
        self.agent.validate()?;
        self.cluster.build()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Output directory: the configured one, else `$ETLSCHED_OUT/<name>`,
    /// else `runs/<name>`.
    pub fn resolve_output_dir(&self, name: &str) -> PathBuf {
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(name)
    }

    /// Stable digest of everything but the seeds and the output location.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.output_dir = None;
        let text = serde_json::to_string(&c).unwrap_or_default();
        format!("{:016x}", fnv1a64(&text))
    }
}

/// Sets `path` (dot-separated, e.g. `agent.lr`) to `raw`, parsed as JSON when
/// possible and as a bare string otherwise.
pub fn apply_override(cfg: &RunConfig, path: &str, raw: &str) -> Result<RunConfig> {
    let mut root = serde_json::to_value(cfg)?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cursor = &mut root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let Value::Object(map) = cursor else {
            return Err(Error::Config(format!(
                "override {path}: {} is not an object",
                keys[..i].join(".")
            )));
        };
        if !map.contains_key(*key) {
            return Err(Error::Config(format!("override {path}: unknown field {key:?}")));
        }
        cursor = map.get_mut(*key).expect("checked");
    }
    *cursor = value;
    serde_json::from_value(root).map_err(|e| Error::Config(format!("override {path}={raw}: {e}")))
}

/// Agents the harness can train and evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    Dqn,
    Ddqn,
    QTable,
    Heuristic(HeuristicKind),
}

impl AgentKind {
    pub const NAMES: [&'static str; 6] =
        ["dqn", "ddqn", "qtable", "random", "roundrobin", "leastloaded"];

    pub const RANDOM: Self = Self::Heuristic(HeuristicKind::Random);
    pub const ROUND_ROBIN: Self = Self::Heuristic(HeuristicKind::RoundRobin);
    pub const LEAST_LOADED: Self = Self::Heuristic(HeuristicKind::LeastLoaded);

    pub fn name(self) -> &'static str {
        match self {
            Self::Dqn => "dqn",
            Self::Ddqn => "ddqn",
            Self::QTable => "qtable",
            Self::Heuristic(HeuristicKind::Random) => "random",
            Self::Heuristic(HeuristicKind::RoundRobin) => "roundrobin",
            Self::Heuristic(HeuristicKind::LeastLoaded) => "leastloaded",
        }
    }

    pub fn learns(self) -> bool {
        matches!(self, Self::Dqn | Self::Ddqn | Self::QTable)
    }

    pub fn parse_list(list: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let k: Self = name.parse()?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("empty agent list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dqn" => Ok(Self::Dqn),
            "ddqn" => Ok(Self::Ddqn),
            "qtable" => Ok(Self::QTable),
            "random" => Ok(Self::RANDOM),
            "roundrobin" => Ok(Self::ROUND_ROBIN),
            "leastloaded" => Ok(Self::LEAST_LOADED),
            other => Err(Error::Config(format!(
                "unknown agent {other:?}; valid agents: {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}
