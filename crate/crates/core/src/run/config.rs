use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SplitRatios;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

pub const CONFIG_FILE: &str = "config.json";
pub const SPLITS_FILE: &str = "splits.csv";
pub const HISTORY_FILE: &str = "history.csv";

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 42;

/// Everything needed to reproduce a run, stored as `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data_root: PathBuf,
    pub output_dir: PathBuf,
    /// Drives the split and weight init; `train.seed` drives shuffling.
    pub seed: u64,
    #[serde(default)]
    pub split: SplitRatios,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
