use std::path::Path;

use serde::{Deserialize, Serialize};
use slotrack::baseline::BaselineConfig;
use slotrack::metrics::EvalConfig;
use slotrack::model::ModelConfig;
use slotrack::synthdata::DatasetConfig;
use slotrack::trainloss::TrainConfig;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Settings for the slot-trace dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlotsConfig {
    /// Objectness floor in probability space.
    pub floor: f64,
    pub frames: usize,
    /// Crop window size as a fraction of the still.
    pub window: f64,
}

impl Default for SlotsConfig {
    fn default() -> Self {
        SlotsConfig {
            floor: 0.2,
            frames: 12,
            window: 0.5,
        }
    }
}

/// Training-log options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogConfig {
    /// Eval-split videos scored at every log row; 0 disables.
    pub eval_videos: usize,
}

impl Default for LogConfig {
    fn default() -> Self {
        LogConfig { eval_videos: 8 }
    }
}

/// Everything a command can be configured with. Every block is optional in
/// the file and falls back to its defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema: u32,
    pub seed: u64,
    pub data: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub baseline: BaselineConfig,
    pub slots: SlotsConfig,
    pub log: LogConfig,
}

impl RunConfig {
    pub fn defaults() -> Self {
        RunConfig {
            schema: SCHEMA_VERSION,
            ..RunConfig::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner().message()))
        })?;
        if cfg.schema == 0 {
            cfg.schema = SCHEMA_VERSION;
        }
        if cfg.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!("unsupported config schema {}", cfg.schema)));
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::defaults()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                RunConfig::parse(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        self.baseline.validate()?;
        if !(0.0..1.0).contains(&self.slots.floor) || self.slots.frames == 0 || !(self.slots.window > 0.0 && self.slots.window <= 1.0) {
            return Err(CliError::Config("slots needs floor in [0, 1), frames >= 1 and window in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
