//! The single run-configuration file.
//!
//! Every tunable in the stack lives here so a run can be reproduced from
//! the archived copy of its config plus the master seed. Unknown keys are
//! rejected on parse.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::CascadeGains;
use crate::dynamics::DroneParams;
use crate::env::EpisodeConfig;
use crate::gear::GearConfig;
use crate::rl::{PpoConfig, RewardWeights};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Curriculum and optimization schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Total environment steps to collect across both stages.
    pub total_steps: u64,
    /// Parallel (round-robin) training environments.
    pub num_envs: usize,
    /// Hidden layer widths of both networks.
    pub hidden_layers: Vec<usize>,
    /// Initial state-independent log standard deviation.
    pub init_log_std: f64,
    /// Mean episode return that promotes position-hold to position-set.
    pub promotion_threshold: f64,
    /// Episodes folded into the promotion statistic.
    pub promotion_window: usize,
    /// Checkpoint every this many environment steps.
    pub checkpoint_interval: u64,
    /// Episode horizon for the position-hold stage, seconds.
    pub hold_horizon: f64,
    /// Episode horizon for the position-set stage, seconds.
    pub set_horizon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            total_steps: 600_000,
            num_envs: 8,
            hidden_layers: vec![64, 64],
            init_log_std: -1.0,
            promotion_threshold: -8.0,
            promotion_window: 20,
            checkpoint_interval: 100_000,
            hold_horizon: 8.0,
            set_horizon: 15.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.total_steps == 0 || self.num_envs == 0 {
            return Err("total_steps and num_envs must be > 0".into());
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.iter().any(|w| *w == 0) {
            return Err("hidden_layers must be non-empty and positive".into());
        }
        if self.promotion_window == 0 {
            return Err("promotion_window must be > 0".into());
        }
        if !(self.hold_horizon > 1.0) || !(self.set_horizon > 1.0) {
            return Err("stage horizons must exceed 1 s".into());
        }
        Ok(())
    }
}

/// Everything a run needs, plus the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub drone: DroneParams,
    pub control: CascadeGains,
    pub gear: GearConfig,
    pub reward: RewardWeights,
    pub ppo: PpoConfig,
    pub episode: EpisodeConfig,
    pub training: TrainingConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.drone.validate().map_err(ConfigError::Invalid)?;
        self.control.validate().map_err(ConfigError::Invalid)?;
        self.gear.validate().map_err(ConfigError::Invalid)?;
        self.reward.validate().map_err(ConfigError::Invalid)?;
        self.ppo.validate().map_err(ConfigError::Invalid)?;
        self.episode.validate().map_err(ConfigError::Invalid)?;
        self.training.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml())
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))
    }
}
