//! Sequence-to-code model: reads a masked problem, predicts one code-count
//! vector per number, and decodes those vectors into an answer.

pub mod checkpoint;
mod linalg;
pub mod network;
pub mod optim;
pub mod params;
pub mod predict;
pub mod train;
pub mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use network::NetworkError;
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Activation, ModelConfig, Params};
pub use predict::{evaluate, predict_answer, Prediction};
pub use train::{train, EpochLog, Seq2Code, TrainConfig, TrainError, TrainOutcome};
pub use vocab::TokenVocab;
