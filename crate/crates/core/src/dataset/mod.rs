//! Word-problem corpora: loading, number masking, expression binding and
//! construction of code-vector supervision.

mod bind;
mod load;
mod manifest;
mod supervise;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::expr::Literal;

pub use bind::{bind_expression, prepare_expression, BindError};
pub use load::{
    load_corpus, parse_corpus, CorpusFormat, LoadError, LoadOptions, LoadedCorpus, MATH23K_PI,
};
pub use manifest::{fold_manifest, low_resource_manifest};
pub use supervise::{
    make_supervision, supervise_problem, CodesRecord, Example, Supervision, SupervisionStats,
};

/// Default corpus root, used to resolve relative input paths.
pub const DATA_DIR_ENV: &str = "MTREE_DATA_DIR";

/// Number of injected constants at the front of every value list.
pub const CONSTANT_COUNT: usize = 2;
pub const ONE_INDEX: usize = 0;
pub const PI_INDEX: usize = 1;

/// Relative tolerance for answer equality (absolute below magnitude 1).
pub const ANSWER_TOLERANCE: f64 = 1e-4;

pub fn mask_token(i: usize) -> String {
    format!("NUM_{i}")
}

/// True when `predicted` matches `gold` within [`ANSWER_TOLERANCE`].
pub fn answers_match(predicted: f64, gold: f64) -> bool {
    if !predicted.is_finite() || !gold.is_finite() {
        return false;
    }
    let scale = gold.abs().max(1.0);
    (predicted - gold).abs() <= ANSWER_TOLERANCE * scale
}

/// Why a record did not make it into the supervised set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub id: String,
    pub reason: String,
}

/// A masked word problem.
///
/// `values[i]` sits at `tokens[positions[i]]`, which holds `NUM_i`. The
/// constants `1` and `pi` always occupy indices 0 and 1 and the first two
/// tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub values: Vec<Literal>,
    /// Surface spelling of each value, for unmasking.
    pub surface: Vec<String>,
    pub positions: Vec<usize>,
    pub equation: String,
    pub answer: f64,
}

impl Problem {
    /// Tokens with every mask replaced by the spelling it stands for.
    pub fn unmasked_tokens(&self) -> Vec<String> {
        let mut out = self.tokens.clone();
        for (i, &q) in self.positions.iter().enumerate() {
            out[q] = self.surface[i].clone();
        }
        out
    }
}
