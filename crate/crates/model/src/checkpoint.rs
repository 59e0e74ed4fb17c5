//! JSON checkpoints: configuration echo, vocabularies and all parameters.

use std::fs;
use std::path::{Path, PathBuf};

use mtree_core::codec::CodeVocab;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{ModelConfig, Params};
use crate::train::{Seq2Code, TrainConfig};
use crate::vocab::TokenVocab;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelConfig,
    pub training: Option<TrainConfig>,
    pub tokens: TokenVocab,
    pub codes: CodeVocab,
    pub params: Params,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("parameter shapes do not match the stored configuration")]
    Shape,
    #[error("checkpoint holds non-finite parameters")]
    NonFinite,
}

impl Checkpoint {
    pub fn from_model(model: &Seq2Code, training: Option<TrainConfig>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model: model.config.clone(),
            training,
            tokens: model.tokens.clone(),
            codes: model.codes.clone(),
            params: model.params.clone(),
        }
    }

    pub fn into_model(self) -> Seq2Code {
        Seq2Code {
            config: self.model,
            tokens: self.tokens,
            codes: self.codes,
            params: self.params,
        }
    }

    fn validate(&self) -> Result<(), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(self.version));
        }
        if !self
            .params
            .shape_matches(&self.model, self.tokens.len(), self.codes.len())
        {
            return Err(CheckpointError::Shape);
        }
        if !self.params.all_finite() {
            return Err(CheckpointError::NonFinite);
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let json = serde_json::to_string(ck).map_err(|source| CheckpointError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, json).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|source| CheckpointError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    ck.validate()?;
    Ok(ck)
}
