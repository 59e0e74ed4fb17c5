//! Optional JSON configuration file. Command-line flags override it.

use std::path::Path;

use anyhow::Context;
use mtree_model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<String>,
    pub seed: Option<u64>,
    pub strict: Option<bool>,
    /// Value of the `pi` constant; defaults to the corpus convention.
    pub pi: Option<f64>,
    pub model: Option<ModelConfig>,
    pub training: Option<TrainConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
