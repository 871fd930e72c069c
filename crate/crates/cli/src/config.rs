//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::Path;

use aerosense::features::FeatureConfig;
use aerosense::ingest::LabelingConfig;
use aerosense::model::ModelConfig;
use aerosense::sim::SimConfig;
use aerosense::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_HORIZON_MIN: i64 = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub seeds: Vec<u64>,
    /// `standard`, `groups` or `all`.
    pub variants: String,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { seeds: vec![1, 2, 3, 4, 5], variants: "standard".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon_min: i64,
    /// Malformed-row budget when reading trajectory CSV.
    pub error_budget: f64,
    pub sim: SimConfig,
    pub labeling: LabelingConfig,
    pub features: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon_min: DEFAULT_HORIZON_MIN,
            error_budget: aerosense::ingest::DEFAULT_ERROR_BUDGET,
            sim: SimConfig::default(),
            labeling: LabelingConfig::default(),
            features: FeatureConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Apply the global overrides and push seed and horizon into every section.
    pub fn resolve(mut self, seed: Option<u64>, horizon_min: Option<i64>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(h) = horizon_min {
            self.horizon_min = h;
        }
        if self.horizon_min <= 0 {
            return Err(CliError::Usage(format!("--horizon-min must be positive, got {}", self.horizon_min)));
        }
        let horizon = self.horizon_min * 60;
        self.sim.seed = self.seed;
        self.train.seed = self.seed;
        self.labeling.horizon = horizon;
        self.train.horizon = horizon;
        Ok(self)
    }
}
