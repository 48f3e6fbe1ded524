//! Experiment configuration: task presets and the TOML file format.
//!
//! A config file only needs `task`; every other key falls back to that
//! task's preset, so a file can override just the values it cares about.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::PpoConfig;
use crate::datasets::{load_iris, load_mnist2, Dataset, DEFAULT_SPLIT_SEED};
use crate::environment::{EnvConfig, IllegalMode, RewardConfig};
use crate::error::{invalid, Error, Result};
use crate::inner_loop::OptConfig;

/// Environment variable that overrides the configured cache directory.
pub const CACHE_DIR_ENV: &str = "QAS_CACHE_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "iris2_01")]
    Iris2_01,
    #[serde(rename = "iris2_02")]
    Iris2_02,
    #[serde(rename = "iris2_12")]
    Iris2_12,
    #[serde(rename = "iris")]
    Iris,
    #[serde(rename = "mnist2")]
    Mnist2,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Iris2_01, Task::Iris2_02, Task::Iris2_12, Task::Iris, Task::Mnist2];

    pub fn name(self) -> &'static str {
        match self {
            Task::Iris2_01 => "iris2_01",
            Task::Iris2_02 => "iris2_02",
            Task::Iris2_12 => "iris2_12",
            Task::Iris => "iris",
            Task::Mnist2 => "mnist2",
        }
    }

    pub fn num_qubits(self) -> usize {
        match self {
            Task::Mnist2 => 5,
            _ => 2,
        }
    }

    pub fn is_binary_iris(self) -> bool {
        matches!(self, Task::Iris2_01 | Task::Iris2_02 | Task::Iris2_12)
    }

    pub fn load(self, split_seed: u64) -> Result<Dataset> {
        match self {
            Task::Iris2_01 => load_iris(Some((0, 1)), split_seed),
            Task::Iris2_02 => load_iris(Some((0, 2)), split_seed),
            Task::Iris2_12 => load_iris(Some((1, 2)), split_seed),
            Task::Iris => load_iris(None, split_seed),
            Task::Mnist2 => load_mnist2(split_seed).map(|(d, _)| d),
        }
    }

    pub fn default_max_depth(self) -> usize {
        match self {
            Task::Mnist2 => 7,
            _ => 4,
        }
    }

    pub fn default_threshold(self) -> f64 {
        match self {
            Task::Mnist2 => 0.95,
            _ => 1.0,
        }
    }

    pub fn default_ppo(self) -> PpoConfig {
        let (n_steps, total_steps) = match self {
            Task::Iris => (512, 200_000),
            Task::Mnist2 => (1024, 400_000),
            _ => (128, 100_000),
        };
        PpoConfig { n_steps, total_steps, ..PpoConfig::default() }
    }

    pub fn default_opt(self) -> OptConfig {
        let batch_size = if self.is_binary_iris() { 16 } else { 20 };
        OptConfig { batch_size, ..OptConfig::default() }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| invalid(format!("unknown task {s:?}; expected one of iris2_01, iris2_02, iris2_12, iris, mnist2")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Ppo,
    Random,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Ppo => "ppo",
            AgentKind::Random => "random",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub max_depth: usize,
    pub illegal_mode: IllegalMode,
    pub reward: RewardConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub agent: AgentKind,
    /// Outer-loop seeds, one run each.
    pub seeds: Vec<u64>,
    /// Seed of the stratified train/test split.
    pub split_seed: u64,
    /// Directory of the evaluation cache; no persistent cache when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Save a checkpoint after every this many policy updates (0 = only at the end).
    pub checkpoint_every: u64,
    pub environment: EnvironmentSection,
    pub ppo: PpoConfig,
    pub inner_loop: OptConfig,
}

impl ExperimentConfig {
    pub fn for_task(task: Task) -> Self {
        Self {
            task,
            agent: AgentKind::Ppo,
            seeds: vec![1, 2, 3],
            split_seed: DEFAULT_SPLIT_SEED,
            cache_dir: Some(PathBuf::from("cache")),
            out_dir: PathBuf::from("runs"),
            checkpoint_every: 50,
            environment: EnvironmentSection {
                max_depth: task.default_max_depth(),
                illegal_mode: IllegalMode::Terminate,
                reward: RewardConfig { threshold: task.default_threshold(), ..RewardConfig::default() },
            },
            ppo: task.default_ppo(),
            inner_loop: task.default_opt(),
        }
    }

    /// Parses a TOML document, filling missing keys from the task preset.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let task: Task = match user.get("task") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::Parse("`task` must be a string".into())),
            None => return Err(Error::Parse("config is missing `task`".into())),
        };
        let mut merged = toml::Table::try_from(Self::for_task(task)).map_err(|e| Error::Parse(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required"));
        }
        if self.environment.max_depth == 0 {
            return Err(invalid("max_depth must be positive"));
        }
        self.environment.reward.validate()?;
        self.ppo.validate()?;
        self.inner_loop.validate()
    }

    /// Replaces `cache_dir` with the override variable's value, if set.
    pub fn apply_env_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(dir) = lookup(CACHE_DIR_ENV).filter(|d| !d.is_empty()) {
            self.cache_dir = Some(PathBuf::from(dir));
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            num_qubits: self.task.num_qubits(),
            max_depth: self.environment.max_depth,
            reward: self.environment.reward.clone(),
            illegal_mode: self.environment.illegal_mode,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
