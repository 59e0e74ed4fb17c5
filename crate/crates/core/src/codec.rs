//! M-tree codes: per-leaf strings carrying the leaf form and the operator path
//! from the root, their count-vector representation, and decoding back to an
//! M-tree.
//!
//! A code reads `s_r_op1_op2_..._opk`: `s` and `r` are the negation and
//! reciprocal bits of the leaf, the ops spell the path from the root (`+`) to
//! the leaf's parent. Same-operator siblings carry an `@k` suffix. A value
//! that does not appear in the tree gets the single code `None`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Literal;
use crate::mtree::{self, Form, Internal, Leaf, MNode, MTree, Op, Operand};
use crate::normalize::OpTree;

pub const NONE_CODE: &str = "None";

fn op_symbol(op: Op) -> &'static str {
    match op {
        Op::Add => "+",
        Op::Mul => "×",
        Op::MulNeg => "×-",
        Op::AddInv => "+/",
    }
}

fn parse_op(s: &str) -> Option<Op> {
    match s {
        "+" => Some(Op::Add),
        "×" | "*" => Some(Op::Mul),
        "×-" | "*-" => Some(Op::MulNeg),
        "+/" => Some(Op::AddInv),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathStep {
    pub op: Op,
    pub tag: Option<u32>,
}

impl PathStep {
    pub fn new(op: Op, tag: Option<u32>) -> Self {
        Self { op, tag }
    }
}

impl fmt::Display for PathStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(op_symbol(self.op))?;
        if let Some(k) = self.tag {
            write!(f, "@{k}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MTreeCode {
    None,
    Leaf { form: Form, path: Vec<PathStep> },
}

impl MTreeCode {
    /// The path part of the code, e.g. `+_×_+/`.
    pub fn path_string(&self) -> Option<String> {
        match self {
            MTreeCode::None => None,
            MTreeCode::Leaf { path, .. } => Some(join_path(path)),
        }
    }
}

fn join_path(path: &[PathStep]) -> String {
    path.iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("_")
}

impl fmt::Display for MTreeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MTreeCode::None => f.write_str(NONE_CODE),
            MTreeCode::Leaf { form, path } => write!(
                f,
                "{}_{}_{}",
                u8::from(form.is_negated()),
                u8::from(form.is_reciprocal()),
                join_path(path)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed code `{0}`")]
pub struct CodeSyntaxError(pub String);

impl FromStr for MTreeCode {
    type Err = CodeSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == NONE_CODE {
            return Ok(MTreeCode::None);
        }
        let err = || CodeSyntaxError(s.to_string());
        let mut parts = s.split('_');
        let bit = |p: Option<&str>| match p {
            Some("0") => Ok(false),
            Some("1") => Ok(true),
            _ => Err(err()),
        };
        let negated = bit(parts.next())?;
        let recip = bit(parts.next())?;
        let mut path = Vec::new();
        for part in parts {
            let (op, tag) = match part.split_once('@') {
                Some((op, k)) => (op, Some(k.parse::<u32>().map_err(|_| err())?)),
                None => (part, None),
            };
            path.push(PathStep::new(parse_op(op).ok_or_else(err)?, tag));
        }
        if path.is_empty() {
            return Err(err());
        }
        Ok(MTreeCode::Leaf {
            form: Form::from_bits(negated, recip),
            path,
        })
    }
}

/// Codes of one value occurrence, sorted.
pub type CodeSet = Vec<MTreeCode>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("leaf `{0}` has no occurrence index")]
    UnboundLeaf(String),
    #[error("leaf occurrence {occurrence} out of range for {count} values")]
    OccurrenceOutOfRange { occurrence: usize, count: usize },
    #[error("code `{code}` of value {occurrence} is not in the vocabulary")]
    UnknownCode { code: String, occurrence: usize },
    #[error("vector of value {occurrence} has length {got}, vocabulary has {want}")]
    DimensionMismatch {
        occurrence: usize,
        got: usize,
        want: usize,
    },
}

/// One multiset of codes per value occurrence; values absent from the tree
/// get `{None}`.
pub fn encode(tree: &MTree, occurrences: usize) -> Result<Vec<CodeSet>, CodecError> {
    let mut sets: Vec<CodeSet> = vec![Vec::new(); occurrences];
    let mut failure = None;
    tree.visit_leaves(|path, leaf| {
        if failure.is_some() {
            return;
        }
        let Some(occ) = leaf.operand.occurrence else {
            failure = Some(CodecError::UnboundLeaf(leaf.operand.literal.to_string()));
            return;
        };
        if occ >= occurrences {
            failure = Some(CodecError::OccurrenceOutOfRange {
                occurrence: occ,
                count: occurrences,
            });
            return;
        }
        sets[occ].push(MTreeCode::Leaf {
            form: leaf.form,
            path: path.iter().map(|n| PathStep::new(n.op, n.tag)).collect(),
        });
    });
    if let Some(e) = failure {
        return Err(e);
    }
    for set in &mut sets {
        if set.is_empty() {
            set.push(MTreeCode::None);
        }
        set.sort();
    }
    Ok(sets)
}

/// Ordered code set `B`. Index 0 is always `None`; the rest is sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeVocab {
    codes: Vec<String>,
    index: HashMap<String, usize>,
}

impl CodeVocab {
    /// Builds from explicit code strings. `None` is moved to index 0 and the
    /// rest sorted; duplicates collapse.
    pub fn from_codes<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let rest: BTreeSet<String> = codes
            .into_iter()
            .map(Into::into)
            .filter(|c| c != NONE_CODE)
            .collect();
        let codes: Vec<String> = std::iter::once(NONE_CODE.to_string()).chain(rest).collect();
        let index = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Self { codes, index }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn code(&self, i: usize) -> Option<&str> {
        self.codes.get(i).map(String::as_str)
    }
}

impl Serialize for CodeVocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.codes.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CodeVocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let codes = Vec::<String>::deserialize(d)?;
        if codes.first().map(String::as_str) != Some(NONE_CODE) {
            return Err(serde::de::Error::custom(
                "vocabulary must start with \"None\"",
            ));
        }
        let vocab = CodeVocab::from_codes(codes.iter().cloned());
        if vocab.codes != codes {
            return Err(serde::de::Error::custom(
                "vocabulary must be \"None\" followed by distinct sorted codes",
            ));
        }
        Ok(vocab)
    }
}

/// Collects every distinct code seen in a corpus of per-problem code sets.
pub fn build_vocab<'a>(corpus: impl IntoIterator<Item = &'a [CodeSet]>) -> CodeVocab {
    CodeVocab::from_codes(
        corpus
            .into_iter()
            .flatten()
            .flatten()
            .map(|c| c.to_string()),
    )
}

/// Count vector over a [`CodeVocab`].
pub type CodeVector = Vec<u32>;

pub fn vectorize(sets: &[CodeSet], vocab: &CodeVocab) -> Result<Vec<CodeVector>, CodecError> {
    sets.iter()
        .enumerate()
        .map(|(occ, set)| {
            let mut v = vec![0u32; vocab.len()];
            for code in set {
                let s = code.to_string();
                let k = vocab.index_of(&s).ok_or(CodecError::UnknownCode {
                    code: s,
                    occurrence: occ,
                })?;
                v[k] += 1;
            }
            Ok(v)
        })
        .collect()
}

/// Reads count vectors back into code sets. Counts at the `None` index are
/// dropped when other codes are present.
pub fn codes_from_vectors(
    vectors: &[CodeVector],
    vocab: &CodeVocab,
) -> Result<Vec<CodeSet>, CodecError> {
    vectors
        .iter()
        .enumerate()
        .map(|(occ, v)| {
            if v.len() != vocab.len() {
                return Err(CodecError::DimensionMismatch {
                    occurrence: occ,
                    got: v.len(),
                    want: vocab.len(),
                });
            }
            let mut set = Vec::new();
            for (k, &count) in v.iter().enumerate().skip(1) {
                let code: MTreeCode = vocab.codes[k]
                    .parse()
                    .expect("vocabulary holds well-formed codes");
                set.extend(std::iter::repeat_n(code, count as usize));
            }
            if set.is_empty() {
                set.push(MTreeCode::None);
            }
            set.sort();
            Ok(set)
        })
        .collect()
}

/// Nearest nonnegative count per dimension, halves rounded away from zero.
pub fn round_counts(prediction: &[f64]) -> CodeVector {
    prediction
        .iter()
        .map(|&x| {
            if x.is_finite() {
                x.round().max(0.0).min(u32::MAX as f64) as u32
            } else {
                0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("every value is coded None")]
    EmptyTree,
    #[error("code path does not start at an untagged + root: `{0}`")]
    InvalidRoot(String),
    #[error("inconsistent sibling tags under `{0}`")]
    InconsistentPath(String),
    #[error("{count} code sets for {values} values")]
    ValueCountMismatch { count: usize, values: usize },
}

impl DecodeError {
    /// Variant name, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            DecodeError::EmptyTree => "EmptyTree",
            DecodeError::InvalidRoot(_) => "InvalidRoot",
            DecodeError::InconsistentPath(_) => "InconsistentPath",
            DecodeError::ValueCountMismatch { .. } => "ValueCountMismatch",
        }
    }
}

#[derive(Default)]
struct TrieNode {
    children: Vec<(PathStep, TrieNode)>,
    leaves: Vec<Leaf>,
}

impl TrieNode {
    fn child(&mut self, step: PathStep) -> &mut TrieNode {
        let pos = match self.children.iter().position(|(s, _)| *s == step) {
            Some(p) => p,
            None => {
                self.children.push((step, TrieNode::default()));
                self.children.len() - 1
            }
        };
        &mut self.children[pos].1
    }

    fn check(&self, path: &mut Vec<PathStep>) -> Result<(), DecodeError> {
        for op in [Op::Add, Op::Mul, Op::MulNeg, Op::AddInv] {
            let tags: Vec<Option<u32>> = self
                .children
                .iter()
                .filter(|(s, _)| s.op == op)
                .map(|(s, _)| s.tag)
                .collect();
            if tags.contains(&None) && tags.len() > 1 {
                return Err(DecodeError::InconsistentPath(join_path(path)));
            }
        }
        for (step, child) in &self.children {
            path.push(*step);
            child.check(path)?;
            path.pop();
        }
        Ok(())
    }

    fn into_internal(self, step: PathStep) -> Internal {
        let mut children: Vec<MNode> = self.leaves.into_iter().map(MNode::Leaf).collect();
        children.extend(
            self.children
                .into_iter()
                .map(|(s, n)| MNode::Internal(n.into_internal(s))),
        );
        Internal {
            op: step.op,
            children,
            tag: step.tag,
        }
    }
}

/// Rebuilds the M-tree from per-occurrence code sets.
///
/// Every distinct (tagged) path prefix becomes one internal node and each code
/// adds one leaf under the node its full path names. The result is merged and
/// canonicalized, so `decode(encode(t))` reproduces a canonical `t` exactly.
pub fn decode(sets: &[CodeSet], values: &[Literal]) -> Result<MTree, DecodeError> {
    if sets.len() != values.len() {
        return Err(DecodeError::ValueCountMismatch {
            count: sets.len(),
            values: values.len(),
        });
    }
    let root_step = PathStep::new(Op::Add, None);
    let mut root = TrieNode::default();
    let mut any = false;
    for (occ, set) in sets.iter().enumerate() {
        for code in set {
            let MTreeCode::Leaf { form, path } = code else {
                continue;
            };
            if path.first() != Some(&root_step) {
                return Err(DecodeError::InvalidRoot(code.to_string()));
            }
            let node = path[1..].iter().fold(&mut root, |n, s| n.child(*s));
            node.leaves.push(Leaf::new(
                *form,
                Operand::new(values[occ].clone(), Some(occ)),
            ));
            any = true;
        }
    }
    if !any {
        return Err(DecodeError::EmptyTree);
    }
    root.check(&mut vec![root_step])?;
    let mut internal = root.into_internal(root_step);
    mtree::saturate(&mut internal);
    let tree = MTree::from_root(internal).expect("root is an untagged +");
    Ok(mtree::canonicalize(tree))
}

/// Code strings for the binary operator tree before merging, wrapped under a
/// `+` root. Used only for the binary-vs-M-tree code-set statistic.
///
/// Internal siblings sharing an operator are tagged `@1`/`@2` by position.
pub fn binary_tree_codes(
    tree: &OpTree,
    occurrences: usize,
) -> Result<Vec<Vec<String>>, CodecError> {
    fn walk(
        node: &OpTree,
        path: &mut Vec<PathStep>,
        out: &mut [Vec<String>],
    ) -> Result<(), CodecError> {
        match node {
            OpTree::Leaf(leaf) => {
                let occ = leaf
                    .operand
                    .occurrence
                    .ok_or_else(|| CodecError::UnboundLeaf(leaf.operand.literal.to_string()))?;
                let count = out.len();
                let slot = out.get_mut(occ).ok_or(CodecError::OccurrenceOutOfRange {
                    occurrence: occ,
                    count,
                })?;
                slot.push(
                    MTreeCode::Leaf {
                        form: leaf.form,
                        path: path.clone(),
                    }
                    .to_string(),
                );
            }
            OpTree::Node { children, .. } => {
                let ops: Vec<Option<Op>> = children
                    .iter()
                    .map(|c| match c {
                        OpTree::Node { op, .. } => Some(*op),
                        OpTree::Leaf(_) => None,
                    })
                    .collect();
                let clash = ops.len() == 2 && ops[0].is_some() && ops[0] == ops[1];
                for (i, child) in children.iter().enumerate() {
                    if let OpTree::Node { op, .. } = child {
                        path.push(PathStep::new(*op, clash.then_some(i as u32 + 1)));
                        walk(child, path, out)?;
                        path.pop();
                    } else {
                        walk(child, path, out)?;
                    }
                }
            }
        }
        Ok(())
    }
    let mut out = vec![Vec::new(); occurrences];
    let mut path = vec![PathStep::new(Op::Add, None)];
    match tree {
        OpTree::Leaf(_) => walk(tree, &mut path, &mut out)?,
        OpTree::Node { op, .. } => {
            path.push(PathStep::new(*op, None));
            walk(tree, &mut path, &mut out)?;
        }
    }
    for set in &mut out {
        if set.is_empty() {
            set.push(NONE_CODE.to_string());
        }
        set.sort();
    }
    Ok(out)
}

/// Size of a training code set and the share of test problems whose codes it
/// fully covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeSetStats {
    pub set_size: usize,
    pub coverage_pct: f64,
}

/// Code-set statistics for a train/test split of per-problem code strings.
pub fn code_set_stats(train: &[Vec<Vec<String>>], test: &[Vec<Vec<String>>]) -> CodeSetStats {
    let vocab: BTreeSet<&str> = std::iter::once(NONE_CODE)
        .chain(train.iter().flatten().flatten().map(String::as_str))
        .collect();
    let covered = test
        .iter()
        .filter(|p| p.iter().flatten().all(|c| vocab.contains(c.as_str())))
        .count();
    let coverage_pct = if test.is_empty() {
        100.0
    } else {
        100.0 * covered as f64 / test.len() as f64
    };
    CodeSetStats {
        set_size: vocab.len(),
        coverage_pct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtree::{canonicalize, eval_mtree};

    fn operand(v: &str, occ: usize) -> Operand {
        Operand::new(Literal::decimal(v).unwrap(), Some(occ))
    }

    fn leaf(v: &str, occ: usize, form: Form) -> MNode {
        MNode::Leaf(Leaf::new(form, operand(v, occ)))
    }

    fn internal(op: Op, children: Vec<MNode>) -> MNode {
        MNode::Internal(Internal::new(op, children))
    }

    fn tree(children: Vec<MNode>) -> MTree {
        canonicalize(MTree::from_root(Internal::new(Op::Add, children)).unwrap())
    }

    fn strings(sets: &[CodeSet]) -> Vec<Vec<String>> {
        sets.iter()
            .map(|s| s.iter().map(|c| c.to_string()).collect())
            .collect()
    }

    #[test]
    fn code_strings_parse_back() {
        for s in ["None", "1_0_+", "0_0_+_×_+/", "1_1_+_×-@2_+/", "0_1_+_×@1"] {
            let code: MTreeCode = s.parse().unwrap();
            assert_eq!(code.to_string(), s);
        }
        assert_eq!(
            "0_0_+_*".parse::<MTreeCode>().unwrap().to_string(),
            "0_0_+_×"
        );
        for bad in ["", "0_0", "2_0_+", "0_0_-", "0_0_+@x", "0_0_+__×"] {
            assert!(bad.parse::<MTreeCode>().is_err(), "{bad}");
        }
    }

    #[test]
    fn negative_root_leaf_code() {
        // 1, pi, 8
        let t = tree(vec![leaf("8", 2, Form::Neg)]);
        let sets = encode(&t, 3).unwrap();
        assert_eq!(
            strings(&sets),
            vec![vec!["None"], vec!["None"], vec!["1_0_+"]]
        );
    }

    #[test]
    fn leaves_under_addinv_share_path() {
        let t = tree(vec![
            leaf("8", 0, Form::Neg),
            internal(
                Op::Mul,
                vec![
                    leaf("2", 1, Form::V),
                    internal(
                        Op::AddInv,
                        vec![leaf("1", 2, Form::V), leaf("3", 3, Form::V)],
                    ),
                ],
            ),
        ]);
        let sets = encode(&t, 4).unwrap();
        assert_eq!(sets[2][0].path_string().unwrap(), "+_×_+/");
        assert_eq!(sets[3][0].path_string().unwrap(), "+_×_+/");
        assert_eq!(sets[1][0].to_string(), "0_0_+_×");
    }

    #[test]
    fn repeated_value_counts_twice() {
        // v*w + v*u with v bound once
        let t = tree(vec![
            internal(Op::Mul, vec![leaf("2", 0, Form::V), leaf("3", 1, Form::V)]),
            internal(Op::Mul, vec![leaf("2", 0, Form::V), leaf("4", 2, Form::V)]),
        ]);
        let sets = encode(&t, 3).unwrap();
        let vocab = build_vocab([sets.as_slice()]);
        let vectors = vectorize(&sets, &vocab).unwrap();
        assert_eq!(vectors[0].iter().sum::<u32>(), 2);
        assert_eq!(
            strings(&sets)[0],
            vec!["0_0_+_×@1".to_string(), "0_0_+_×@2".to_string()]
        );
        let back = decode(
            &codes_from_vectors(&vectors, &vocab).unwrap(),
            &[
                Literal::decimal("2").unwrap(),
                Literal::decimal("3").unwrap(),
                Literal::decimal("4").unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(back.to_string(), t.to_string());
        assert_eq!(eval_mtree(&back).unwrap(), 14.0);
    }

    #[test]
    fn unused_constant_is_one_hot_none() {
        let t = tree(vec![leaf("5", 2, Form::V)]);
        let sets = encode(&t, 3).unwrap();
        let vocab = build_vocab([sets.as_slice()]);
        let v = vectorize(&sets, &vocab).unwrap();
        assert_eq!(v[1], vec![1, 0]);
        assert_eq!(vocab.codes(), ["None", "0_0_+"]);
    }

    #[test]
    fn empty_problem_vectorizes_to_nothing() {
        let vocab = CodeVocab::from_codes(["0_0_+"]);
        assert!(vectorize(&[], &vocab).unwrap().is_empty());
    }

    #[test]
    fn unknown_code_is_reported() {
        let vocab = CodeVocab::from_codes(["0_0_+"]);
        let sets = vec![vec!["1_0_+".parse().unwrap()]];
        assert_eq!(
            vectorize(&sets, &vocab),
            Err(CodecError::UnknownCode {
                code: "1_0_+".into(),
                occurrence: 0
            })
        );
    }

    #[test]
    fn decode_single_negative_code() {
        let sets = vec![vec!["1_0_+".parse().unwrap()]];
        let t = decode(&sets, &[Literal::decimal("6").unwrap()]).unwrap();
        assert_eq!(t.to_string(), "(+ -6#0)");
        assert_eq!(eval_mtree(&t).unwrap(), -6.0);
    }

    #[test]
    fn decode_errors() {
        let v = [Literal::decimal("6").unwrap()];
        assert_eq!(
            decode(&[vec![MTreeCode::None]], &v),
            Err(DecodeError::EmptyTree)
        );
        let bad: MTreeCode = "0_0_×".parse().unwrap();
        assert!(matches!(
            decode(&[vec![bad]], &v),
            Err(DecodeError::InvalidRoot(_))
        ));
        let mixed = vec!["0_0_+_×".parse().unwrap(), "0_0_+_×@1".parse().unwrap()];
        assert!(matches!(
            decode(&[mixed], &v),
            Err(DecodeError::InconsistentPath(_))
        ));
        assert!(matches!(
            decode(&[], &v),
            Err(DecodeError::ValueCountMismatch { .. })
        ));
    }

    #[test]
    fn vocab_orders_none_first_then_sorted() {
        let v = CodeVocab::from_codes(["0_0_+_×", "None", "0_0_+", "0_0_+"]);
        assert_eq!(v.codes(), ["None", "0_0_+", "0_0_+_×"]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<CodeVocab>(&json).unwrap(), v);
        assert!(serde_json::from_str::<CodeVocab>(r#"["0_0_+"]"#).is_err());
        assert!(serde_json::from_str::<CodeVocab>(r#"["None","b","a"]"#).is_err());
    }

    #[test]
    fn rounding_is_half_away_and_clamped() {
        assert_eq!(
            round_counts(&[0.5, 1.49, -0.7, 2.5, f64::NAN]),
            vec![1, 1, 0, 3, 0]
        );
    }

    #[test]
    fn vector_readback_drops_stray_none_counts() {
        let vocab = CodeVocab::from_codes(["0_0_+"]);
        let sets = codes_from_vectors(&[vec![1, 2], vec![0, 0]], &vocab).unwrap();
        assert_eq!(strings(&sets), vec![vec!["0_0_+", "0_0_+"], vec!["None"]]);
    }

    #[test]
    fn coverage_statistic() {
        let p = vec![vec!["0_0_+".to_string()]];
        let s = code_set_stats(std::slice::from_ref(&p), std::slice::from_ref(&p));
        assert_eq!(s.set_size, 2);
        assert_eq!(s.coverage_pct, 100.0);
        let q = vec![vec!["1_0_+".to_string()]];
        let s = code_set_stats(std::slice::from_ref(&p), &[p.clone(), q]);
        assert_eq!(s.coverage_pct, 50.0);
    }
}
