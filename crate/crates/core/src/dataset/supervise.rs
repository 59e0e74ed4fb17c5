use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{answers_match, bind_expression, prepare_expression, Dropped, Problem};
use crate::codec::{
    self, binary_tree_codes, build_vocab, code_set_stats, CodeSet, CodeSetStats, CodeVector,
    CodeVocab, MTreeCode,
};
use crate::expr::{eval_expr, Expr, Literal};
use crate::mtree::{canonicalize, eval_mtree, to_mtree, MTree};
use crate::normalize::{apply_operator_conversion, expand};

/// A problem with its bound gold expression, canonical M-tree and codes.
#[derive(Debug, Clone)]
pub struct Example {
    pub problem: Problem,
    pub expr: Expr,
    pub tree: MTree,
    pub codes: Vec<CodeSet>,
    /// Codes of the unmerged binary tree, for the code-set comparison only.
    pub binary_codes: Vec<Vec<String>>,
    /// Count vectors; `None` when some code is missing from the vocabulary.
    pub vectors: Option<Vec<CodeVector>>,
}

impl Example {
    pub fn code_strings(&self) -> Vec<Vec<String>> {
        self.codes
            .iter()
            .map(|s| s.iter().map(ToString::to_string).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionStats {
    pub vocab_size: usize,
    /// Share of evaluation problems whose every code is in the vocabulary.
    pub coverage_pct: f64,
    pub dropped: Vec<Dropped>,
    /// Number of expression operands → number of retained problems.
    pub operand_histogram: BTreeMap<usize, usize>,
    pub train_size: usize,
    pub test_size: usize,
    pub binary_tree: CodeSetStats,
}

#[derive(Debug, Clone)]
pub struct Supervision {
    pub vocab: CodeVocab,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub stats: SupervisionStats,
}

/// Runs the whole pipeline on one problem. Any failure becomes a drop record.
pub fn supervise_problem(problem: &Problem) -> Result<Example, Dropped> {
    let drop = |reason: String| Dropped {
        id: problem.id.clone(),
        reason,
    };
    let expr = prepare_expression(problem)
        .and_then(|e| bind_expression(problem, e))
        .map_err(|e| drop(format!("{}: {e}", e.code())))?;
    let value = eval_expr(&expr).map_err(|e| drop(format!("EvalError: {e}")))?;
    if !answers_match(value, problem.answer) {
        return Err(drop(format!(
            "AnswerMismatch: equation gives {value}, answer is {}",
            problem.answer
        )));
    }
    let terms = expand(&expr).map_err(|e| drop(format!("NormalizeError: {e}")))?;
    let converted = apply_operator_conversion(&terms);
    let m = problem.values.len();
    let binary_codes =
        binary_tree_codes(&converted, m).map_err(|e| drop(format!("CodecError: {e}")))?;
    let tree = canonicalize(to_mtree(converted));
    let codes = codec::encode(&tree, m).map_err(|e| drop(format!("CodecError: {e}")))?;
    let decoded =
        codec::decode(&codes, &problem.values).map_err(|e| drop(format!("DecodeError: {e}")))?;
    match eval_mtree(&decoded) {
        Ok(v) if answers_match(v, problem.answer) => {}
        Ok(v) => {
            return Err(drop(format!(
                "AnswerMismatch: decoded tree gives {v}, answer is {}",
                problem.answer
            )))
        }
        Err(e) => return Err(drop(format!("EvalError: {e}"))),
    }
    Ok(Example {
        problem: problem.clone(),
        expr,
        tree,
        codes,
        binary_codes,
        vectors: None,
    })
}

fn supervise_all(problems: &[Problem]) -> (Vec<Example>, Vec<Dropped>) {
    let results: Vec<Result<Example, Dropped>> =
        problems.par_iter().map(supervise_problem).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for r in results {
        match r {
            Ok(e) => kept.push(e),
            Err(d) => {
                log::info!("dropping {}: {}", d.id, d.reason);
                dropped.push(d);
            }
        }
    }
    (kept, dropped)
}

/// Encodes a train/test split. The vocabulary comes from the training part;
/// test problems with codes outside it keep `vectors = None` and count
/// against coverage. With an empty test part coverage is measured on train.
pub fn make_supervision(train: &[Problem], test: &[Problem]) -> Supervision {
    let (mut train_ex, mut dropped) = supervise_all(train);
    let (mut test_ex, test_dropped) = supervise_all(test);
    dropped.extend(test_dropped);

    let vocab = build_vocab(train_ex.iter().map(|e| e.codes.as_slice()));
    for ex in train_ex.iter_mut().chain(test_ex.iter_mut()) {
        ex.vectors = codec::vectorize(&ex.codes, &vocab).ok();
    }

    let eval_part = if test_ex.is_empty() {
        &train_ex
    } else {
        &test_ex
    };
    let coverage_pct = if eval_part.is_empty() {
        100.0
    } else {
        100.0 * eval_part.iter().filter(|e| e.vectors.is_some()).count() as f64
            / eval_part.len() as f64
    };
    let mut operand_histogram = BTreeMap::new();
    for ex in train_ex.iter().chain(&test_ex) {
        *operand_histogram
            .entry(ex.expr.operand_count())
            .or_insert(0) += 1;
    }
    let bin_train: Vec<_> = train_ex.iter().map(|e| e.binary_codes.clone()).collect();
    let bin_test: Vec<_> = test_ex.iter().map(|e| e.binary_codes.clone()).collect();
    let binary_tree = code_set_stats(
        &bin_train,
        if test_ex.is_empty() {
            &bin_train
        } else {
            &bin_test
        },
    );

    let stats = SupervisionStats {
        vocab_size: vocab.len(),
        coverage_pct,
        dropped,
        operand_histogram,
        train_size: train_ex.len(),
        test_size: test_ex.len(),
        binary_tree,
    };
    Supervision {
        vocab,
        train: train_ex,
        test: test_ex,
        stats,
    }
}

/// One line of a codes file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodesRecord {
    pub id: String,
    pub values: Vec<f64>,
    pub codes: Vec<Vec<String>>,
    /// Vocabulary size; informational, so hand-written files may omit it.
    #[serde(default)]
    pub vector_dim: usize,
    pub vectors: Option<Vec<CodeVector>>,
}

impl CodesRecord {
    pub fn from_example(ex: &Example, vocab: &CodeVocab) -> Self {
        Self {
            id: ex.problem.id.clone(),
            values: ex.problem.values.iter().map(Literal::value).collect(),
            codes: ex.code_strings(),
            vector_dim: vocab.len(),
            vectors: ex.vectors.clone(),
        }
    }

    /// Values as literals spelled by their shortest round-trip decimal form.
    pub fn literals(&self) -> Vec<Literal> {
        self.values
            .iter()
            .map(|&v| Literal::new(v.to_string(), v))
            .collect()
    }

    pub fn code_sets(&self) -> Result<Vec<CodeSet>, codec::CodeSyntaxError> {
        self.codes
            .iter()
            .map(|set| {
                let mut parsed = set
                    .iter()
                    .map(|s| s.parse::<MTreeCode>())
                    .collect::<Result<Vec<_>, _>>()?;
                parsed.sort();
                Ok(parsed)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_corpus, CorpusFormat, LoadOptions};

    fn corpus(lines: &str) -> Vec<Problem> {
        parse_corpus(lines, &LoadOptions::new(CorpusFormat::Synthetic))
            .unwrap()
            .problems
    }

    #[test]
    fn figure_problem_codes() {
        let p = corpus(
            r#"{"id":"mike","text":"Mike read 2 hours at 3 pages an hour, then 4 and 5 pages.","equation":"x=2*3+4+5","ans":15}"#,
        );
        let ex = supervise_problem(&p[0]).unwrap();
        assert_eq!(
            ex.code_strings(),
            vec![
                vec!["None"],
                vec!["None"],
                vec!["0_0_+_×"],
                vec!["0_0_+_×"],
                vec!["0_0_+"],
                vec!["0_0_+"],
            ]
        );
    }

    #[test]
    fn single_problem_vocab() {
        let p = corpus(r#"{"id":"a","text":"3 and 4","equation":"3+4","ans":7}"#);
        let s = make_supervision(&p, &[]);
        assert_eq!(s.vocab.codes(), ["None", "0_0_+"]);
        assert_eq!(s.stats.vocab_size, 2);
        assert_eq!(s.stats.coverage_pct, 100.0);
        assert_eq!(s.stats.binary_tree.coverage_pct, 100.0);
        assert_eq!(
            s.train[0].vectors.as_ref().unwrap(),
            &vec![vec![1, 0], vec![1, 0], vec![0, 1], vec![0, 1]]
        );
    }

    #[test]
    fn drops_carry_reason_codes() {
        let p = corpus(concat!(
            r#"{"id":"bad-literal","text":"3 and 4","equation":"3+5","ans":8}"#,
            "\n",
            r#"{"id":"bad-answer","text":"3 and 4","equation":"3+4","ans":8}"#,
            "\n",
            r#"{"id":"bad-syntax","text":"3 and 4","equation":"3+","ans":3}"#,
            "\n",
            r#"{"id":"ok","text":"3 and 4","equation":"3*4","ans":12}"#,
        ));
        let s = make_supervision(&p, &[]);
        let reasons: Vec<(&str, &str)> = s
            .stats
            .dropped
            .iter()
            .map(|d| (d.id.as_str(), d.reason.split(':').next().unwrap()))
            .collect();
        assert_eq!(
            reasons,
            [
                ("bad-literal", "UnboundLiteral"),
                ("bad-answer", "AnswerMismatch"),
                ("bad-syntax", "ParseError"),
            ]
        );
        assert_eq!(s.train.len(), 1);
    }

    #[test]
    fn unseen_test_code_lowers_coverage() {
        let train = corpus(r#"{"id":"a","text":"3 and 4","equation":"3+4","ans":7}"#);
        let test = corpus(concat!(
            r#"{"id":"b","text":"3 and 4","equation":"3-4","ans":-1}"#,
            "\n",
            r#"{"id":"c","text":"5 and 4","equation":"5+4","ans":9}"#,
        ));
        let s = make_supervision(&train, &test);
        assert_eq!(s.stats.coverage_pct, 50.0);
        assert!(s.test[0].vectors.is_none());
        assert!(s.test[1].vectors.is_some());
    }

    #[test]
    fn codes_record_round_trip() {
        let p = corpus(r#"{"id":"a","text":"3 and 4","equation":"3/4","ans":0.75}"#);
        let s = make_supervision(&p, &[]);
        let rec = CodesRecord::from_example(&s.train[0], &s.vocab);
        let line = serde_json::to_string(&rec).unwrap();
        let back: CodesRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
        let tree = codec::decode(&back.code_sets().unwrap(), &back.literals()).unwrap();
        assert_eq!(eval_mtree(&tree).unwrap(), 0.75);
    }
}
