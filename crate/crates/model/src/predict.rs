//! Inference: predicted vectors → rounded counts → M-tree → answer.

use mtree_core::codec::{codes_from_vectors, decode, round_counts, DecodeError};
use mtree_core::dataset::{answers_match, Problem};
use mtree_core::mtree::eval_mtree;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::train::Seq2Code;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub answer: Option<f64>,
    /// Rounded codes per value.
    pub codes: Vec<Vec<String>>,
    /// Why no answer was produced, e.g. `EmptyTree`.
    pub failure: Option<String>,
}

impl Prediction {
    pub fn is_correct(&self, gold: f64) -> bool {
        self.answer.is_some_and(|a| answers_match(a, gold))
    }

    fn failed(codes: Vec<Vec<String>>, failure: String) -> Self {
        Self {
            answer: None,
            codes,
            failure: Some(failure),
        }
    }
}

fn decode_failure(e: &DecodeError) -> String {
    format!("{}: {e}", e.kind())
}

/// Decodes real-valued predictions for `problem` into an answer. Failures are
/// reported in the result, never raised.
pub fn answer_from_vectors(
    model: &Seq2Code,
    problem: &Problem,
    vectors: &[Vec<f64>],
) -> Prediction {
    let counts: Vec<_> = vectors.iter().map(|v| round_counts(v)).collect();
    let sets = match codes_from_vectors(&counts, &model.codes) {
        Ok(s) => s,
        Err(e) => return Prediction::failed(Vec::new(), format!("CodecError: {e}")),
    };
    let codes: Vec<Vec<String>> = sets
        .iter()
        .map(|s| s.iter().map(ToString::to_string).collect())
        .collect();
    let tree = match decode(&sets, &problem.values) {
        Ok(t) => t,
        Err(e) => return Prediction::failed(codes, decode_failure(&e)),
    };
    match eval_mtree(&tree) {
        Ok(v) if v.is_finite() => Prediction {
            answer: Some(v),
            codes,
            failure: None,
        },
        Ok(v) => Prediction::failed(codes, format!("NonFinite: {v}")),
        Err(e) => Prediction::failed(codes, format!("EvalError: {e}")),
    }
}

pub fn predict_answer(model: &Seq2Code, problem: &Problem) -> Prediction {
    match model.predict_vectors(problem) {
        Ok(v) => answer_from_vectors(model, problem, &v),
        Err(e) => Prediction::failed(Vec::new(), format!("NetworkError: {e}")),
    }
}

/// Share of `problems` answered within tolerance.
pub fn evaluate(model: &Seq2Code, problems: &[Problem]) -> f64 {
    if problems.is_empty() {
        return 0.0;
    }
    let correct = problems
        .par_iter()
        .filter(|p| predict_answer(model, p).is_correct(p.answer))
        .count();
    correct as f64 / problems.len() as f64
}
