//! File-based run configuration (TOML) and named task-weight presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CorefError, Result};
use crate::evaluation::EvalOptions;
use crate::inference::DEFAULT_THRESHOLD;
use crate::model::ModelConfig;
use crate::mtl_loss::TaskWeights;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub threshold: f64,
    pub singletons: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            threshold: DEFAULT_THRESHOLD,
            singletons: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub evaluation: EvalOptions,
}

/// `(name, coref, singleton, entity_type, info_status)`
pub const PRESETS: [(&str, TaskWeights); 4] = [
    ("baseline", TaskWeights::new(1.0, 0.0, 0.0, 0.0)),
    ("sg", TaskWeights::new(0.5, 0.5, 0.0, 0.0)),
    ("sg_ent", TaskWeights::new(0.4, 0.2, 0.2, 0.0)),
    ("sg_ent_infs", TaskWeights::new(0.55, 0.15, 0.15, 0.15)),
];

pub fn preset(name: &str) -> Result<TaskWeights> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, w)| *w)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CorefError::Config(format!(
                "unknown preset `{name}` (known: {})",
                known.join(", ")
            ))
        })
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CorefError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CorefError::io(path, e))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CorefError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.inference.threshold.is_nan() {
            return Err(CorefError::Config(
                "inference.threshold must be a number".into(),
            ));
        }
        Ok(())
    }

    /// Applies a named preset to the task weights. The baseline preset also
    /// turns the auxiliary heads off.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        self.train.task_weights = preset(name)?;
        self.train.auxiliary_heads = name != "baseline";
        Ok(())
    }
}
