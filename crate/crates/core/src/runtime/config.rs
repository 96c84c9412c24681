use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::action_space::{DEFAULT_THRESHOLD, MAX_SCORE, MIN_SCORE};
use crate::backend::BackendConfig;
use crate::driver::EmotionWeights;
use crate::field::BlendConfig;
use crate::ltrha::DEFAULT_BALANCE_BOUND;

pub const DEFAULT_GOAL: &str = "live well in IrollanValley and get along with others";
pub const DEFAULT_STEPS: u64 = 75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub capacity: usize,
    pub compression_window: usize,
    pub retention_window: usize,
    pub top_k: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            capacity: 200,
            compression_window: 10,
            retention_window: 5,
            top_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverConfig {
    pub initial: f64,
    pub weights: EmotionWeights,
    pub diff_scale: f64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            initial: 1.0,
            weights: EmotionWeights::default(),
            diff_scale: 2.0,
        }
    }
}

/// How outcomes turn into desire and pain for the next turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub desire_per_success: f64,
    pub desire_per_received_chat: f64,
    pub pain_per_failure: f64,
    pub pain_per_filtered: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            desire_per_success: 1.0,
            desire_per_received_chat: 1.0,
            pain_per_failure: 1.0,
            pain_per_filtered: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceConfig {
    pub s_min: i64,
    pub s_max: i64,
    pub balance_bound: i64,
}

impl Default for ResourceConfig {
    fn default() -> Self {
        Self {
            s_min: 1,
            s_max: 3,
            balance_bound: DEFAULT_BALANCE_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub steps: u64,
    pub seed: u64,
    /// Agent ids; must match the world's agents. Empty means all of them.
    pub agents: Vec<String>,
    pub goal: String,
    /// World-definition file; the bundled world when absent.
    pub world: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Also write a plain-text transcript of every turn.
    pub transcript: bool,
    pub elimination_threshold: f64,
    pub blend: BlendConfig,
    pub memory: MemoryConfig,
    pub driver: DriverConfig,
    pub signals: SignalConfig,
    pub resources: ResourceConfig,
    pub backend: BackendConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            seed: 0,
            agents: Vec::new(),
            goal: DEFAULT_GOAL.to_string(),
            world: None,
            output: None,
            transcript: false,
            elimination_threshold: DEFAULT_THRESHOLD,
            blend: BlendConfig::default(),
            memory: MemoryConfig::default(),
            driver: DriverConfig::default(),
            signals: SignalConfig::default(),
            resources: ResourceConfig::default(),
            backend: BackendConfig::default(),
        }
    }
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self, RuntimeError> {
        toml::from_str(text).map_err(|e| RuntimeError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let text = std::fs::read_to_string(path).map_err(|e| RuntimeError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, RuntimeError> {
        toml::to_string(self).map_err(|e| RuntimeError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        let bad = |m: &str| Err(RuntimeError::Config(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if self.goal.trim().is_empty() {
            return bad("goal must not be empty");
        }
        if !(MIN_SCORE..=MAX_SCORE).contains(&self.elimination_threshold) {
            return bad("elimination_threshold must lie in [1, 5]");
        }
        self.blend
            .validate()
            .map_err(|e| RuntimeError::Config(e.to_string()))?;
        let m = &self.memory;
        if m.capacity == 0 || m.compression_window < 2 || m.retention_window == 0 || m.top_k == 0 {
            return bad("memory: capacity, retention_window and top_k must be positive; compression_window >= 2");
        }
        self.driver
            .weights
            .validate()
            .map_err(|e| RuntimeError::Config(e.to_string()))?;
        if !self.driver.initial.is_finite() || !(self.driver.diff_scale.is_finite() && self.driver.diff_scale > 0.0) {
            return bad("driver: initial must be finite and diff_scale positive");
        }
        let s = &self.signals;
        let signals = [
            s.desire_per_success,
            s.desire_per_received_chat,
            s.pain_per_failure,
            s.pain_per_filtered,
        ];
        if signals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("signals must be finite and nonnegative");
        }
        let r = &self.resources;
        if r.s_min <= 0 || r.s_min > r.s_max || r.balance_bound < 1 {
            return bad("resources: need 0 < s_min <= s_max and balance_bound >= 1");
        }
        self.backend
            .validate()
            .map_err(|e| RuntimeError::Config(e.to_string()))?;
        Ok(())
    }
}
