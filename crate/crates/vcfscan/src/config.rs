use std::path::Path;

use serde::{Deserialize, Serialize};
use vcfscan_core::pipeline::PipelineConfig;
use vcfscan_core::rulefit::TrainConfig;
use vcfscan_core::volume::DEFAULT_GRADE_THRESHOLD;

use crate::error::{Error, Result};

/// Largest volume accepted by the readers, in voxels (1 GiB of labels).
pub const DEFAULT_MAX_VOXELS: u64 = 1 << 28;

/// Everything `--config` can set. Missing keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub max_voxels: u64,
    pub grade_threshold: u8,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            max_voxels: DEFAULT_MAX_VOXELS,
            grade_threshold: DEFAULT_GRADE_THRESHOLD,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let cfg: Config =
            serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.pipeline.grid_size < vcfscan_core::heightmap::MIN_GRID_SIZE {
            return Err(Error::Validation(format!(
                "grid size {} is below the minimum of {}",
                self.pipeline.grid_size,
                vcfscan_core::heightmap::MIN_GRID_SIZE
            )));
        }
        if self.grade_threshold == 0 || self.grade_threshold > 3 {
            return Err(Error::Validation("grade threshold must be 1, 2 or 3".into()));
        }
        Ok(())
    }
}
