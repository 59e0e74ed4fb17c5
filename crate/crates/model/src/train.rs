//! Minibatch training of the seq2code network.

use std::time::Instant;

use mtree_core::codec::CodeVocab;
use mtree_core::dataset::{Example, Problem};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{self, NetworkError};
use crate::optim::{clip_global_norm, Optimizer, OptimizerKind};
use crate::params::{ModelConfig, Params};
use crate::predict::evaluate;
use crate::vocab::TokenVocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub optimizer: OptimizerKind,
    /// Computes per-problem gradients on the rayon pool. Gradients are still
    /// summed in batch order, so results match the sequential mode exactly.
    pub parallel: bool,
    /// Fills `seconds` in the log. Off by default so logs are reproducible.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            clip_norm: Some(5.0),
            optimizer: OptimizerKind::Adam,
            parallel: false,
            record_time: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Summed objective over the epoch divided by the number of problems.
    pub loss: f64,
    pub dev_accuracy: Option<f64>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training problems")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("problem {id} has no target vectors")]
    MissingTargets { id: String },
    #[error("problem {id}: {source}")]
    Network { id: String, source: NetworkError },
    #[error(
        "loss diverged at epoch {epoch}, batch {batch} (loss {loss}, gradient norm {grad_norm})"
    )]
    DivergenceDetected {
        epoch: usize,
        batch: usize,
        loss: f64,
        grad_norm: f64,
    },
}

/// A trained (or freshly initialized) model with its vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Code {
    pub config: ModelConfig,
    pub tokens: TokenVocab,
    pub codes: CodeVocab,
    pub params: Params,
}

impl Seq2Code {
    /// Builds vocabularies from `train` and initializes parameters.
    pub fn new(config: ModelConfig, train: &[Example], codes: CodeVocab, seed: u64) -> Self {
        let masks = train
            .iter()
            .map(|e| e.problem.values.len())
            .max()
            .unwrap_or(0);
        let tokens = TokenVocab::build(
            train.iter().map(|e| e.problem.tokens.as_slice()),
            masks,
            config.max_words,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(&config, tokens.len(), codes.len(), &mut rng);
        Self {
            config,
            tokens,
            codes,
            params,
        }
    }

    /// Real-valued code vector per value of `problem`.
    pub fn predict_vectors(&self, problem: &Problem) -> Result<Vec<Vec<f64>>, NetworkError> {
        network::forward(
            &self.params,
            self.config.activation,
            &self.tokens.ids(&problem.tokens),
            &problem.positions,
        )
    }
}

pub struct TrainOutcome {
    pub model: Seq2Code,
    pub log: Vec<EpochLog>,
}

struct Item<'a> {
    id: &'a str,
    tokens: Vec<usize>,
    positions: &'a [usize],
    targets: Vec<Vec<f64>>,
}

fn items<'a>(model: &Seq2Code, train: &'a [Example]) -> Result<Vec<Item<'a>>, TrainError> {
    train
        .iter()
        .map(|e| {
            let vectors = e
                .vectors
                .as_ref()
                .ok_or_else(|| TrainError::MissingTargets {
                    id: e.problem.id.clone(),
                })?;
            Ok(Item {
                id: &e.problem.id,
                tokens: model.tokens.ids(&e.problem.tokens),
                positions: &e.problem.positions,
                targets: vectors
                    .iter()
                    .map(|v| v.iter().map(|&c| f64::from(c)).collect())
                    .collect(),
            })
        })
        .collect()
}

/// Shuffles, groups problems of similar length, and shuffles the groups.
fn batches(items: &[Item], size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| items[i].tokens.len());
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    out.shuffle(rng);
    out
}

fn item_gradient(model: &Seq2Code, item: &Item, grad: &mut Params) -> Result<f64, TrainError> {
    network::loss_and_grad(
        &model.params,
        model.config.activation,
        &item.tokens,
        item.positions,
        &item.targets,
        grad,
    )
    .map_err(|source| TrainError::Network {
        id: item.id.to_string(),
        source,
    })
}

/// Trains a new model on `train`; `dev` problems, when given, are scored
/// for answer accuracy after every epoch.
pub fn train(
    train: &[Example],
    dev: &[Problem],
    codes: CodeVocab,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut model = Seq2Code::new(model_config, train, codes, config.seed);
    let data = items(&model, train)?;
    // Shuffling draws from its own stream so it does not depend on the
    // parameter count.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &model.params);
    let mut grad = model.params.zeros_like();
    let mut scratch = model.params.zeros_like();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut epoch_loss = 0.0;
        for (b, batch) in batches(&data, config.batch_size, &mut rng)
            .iter()
            .enumerate()
        {
            grad.fill_zero();
            let mut batch_loss = 0.0;
            if config.parallel {
                let parts: Vec<(f64, Params)> = batch
                    .par_iter()
                    .map(|&i| {
                        let mut g = model.params.zeros_like();
                        item_gradient(&model, &data[i], &mut g).map(|l| (l, g))
                    })
                    .collect::<Result<_, _>>()?;
                for (l, g) in &parts {
                    batch_loss += l;
                    grad.add_assign(g);
                }
            } else {
                for &i in batch {
                    scratch.fill_zero();
                    batch_loss += item_gradient(&model, &data[i], &mut scratch)?;
                    grad.add_assign(&scratch);
                }
            }
            let grad_norm = match config.clip_norm {
                Some(c) => clip_global_norm(&mut grad, c),
                None => grad.norm(),
            };
            if !batch_loss.is_finite() || !grad_norm.is_finite() {
                return Err(TrainError::DivergenceDetected {
                    epoch,
                    batch: b,
                    loss: batch_loss,
                    grad_norm,
                });
            }
            optimizer.step(&mut model.params, &grad);
            epoch_loss += batch_loss;
        }
        let dev_accuracy = (!dev.is_empty()).then(|| evaluate(&model, dev));
        let entry = EpochLog {
            epoch,
            loss: epoch_loss / data.len() as f64,
            dev_accuracy,
            seconds: config.record_time.then(|| started.elapsed().as_secs_f64()),
        };
        log::info!(
            "epoch {epoch}: loss {:.6}{}",
            entry.loss,
            dev_accuracy.map_or(String::new(), |a| format!(", dev accuracy {a:.4}"))
        );
        log.push(entry);
    }
    Ok(TrainOutcome { model, log })
}
