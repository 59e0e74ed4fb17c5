//! M-trees: n-ary trees over `+`, `×`, `×-` and `+/` whose sibling order
//! carries no meaning.
//!
//! [`to_mtree`] flattens the binary operator tree produced by the normalizer
//! with top-down merging; [`canonicalize`] then fixes a sibling order and
//! assigns disambiguation tags to same-operator siblings.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Literal;
use crate::normalize::OpTree;

/// Internal node operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Op {
    /// Sum of the children.
    Add,
    /// Product of the children.
    Mul,
    /// Negated product of the children.
    MulNeg,
    /// Reciprocal of the sum of the children.
    AddInv,
}

impl Op {
    /// ASCII symbol used in tree serializations.
    pub fn ascii(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Mul => "*",
            Op::MulNeg => "*-",
            Op::AddInv => "+/",
        }
    }

    /// Operator a parent takes after absorbing a child, if the pair merges.
    pub fn merge_with(self, child: Op) -> Option<Op> {
        match (self, child) {
            (Op::Add, Op::Add) => Some(Op::Add),
            (Op::Mul, Op::Mul) => Some(Op::Mul),
            (Op::AddInv, Op::Add) => Some(Op::AddInv),
            (Op::MulNeg, Op::Mul) => Some(Op::MulNeg),
            (Op::Mul, Op::MulNeg) => Some(Op::MulNeg),
            (Op::MulNeg, Op::MulNeg) => Some(Op::Mul),
            _ => None,
        }
    }
}

/// The four ways a value can sit in a leaf: `v`, `-v`, `1/v`, `-1/v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Form {
    V,
    Neg,
    Recip,
    NegRecip,
}

impl Form {
    pub fn from_bits(negated: bool, reciprocal: bool) -> Self {
        match (negated, reciprocal) {
            (false, false) => Form::V,
            (true, false) => Form::Neg,
            (false, true) => Form::Recip,
            (true, true) => Form::NegRecip,
        }
    }

    pub fn is_negated(self) -> bool {
        matches!(self, Form::Neg | Form::NegRecip)
    }

    pub fn is_reciprocal(self) -> bool {
        matches!(self, Form::Recip | Form::NegRecip)
    }

    fn prefix(self) -> &'static str {
        match self {
            Form::V => "",
            Form::Neg => "-",
            Form::Recip => "/",
            Form::NegRecip => "-/",
        }
    }

    fn apply(self, v: f64) -> Option<f64> {
        if self.is_reciprocal() && v == 0.0 {
            return None;
        }
        let v = if self.is_reciprocal() { 1.0 / v } else { v };
        Some(if self.is_negated() { -v } else { v })
    }
}

/// A value from the problem, optionally tied to its position in the value list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operand {
    pub literal: Literal,
    pub occurrence: Option<usize>,
}

impl Operand {
    pub fn new(literal: Literal, occurrence: Option<usize>) -> Self {
        Self {
            literal,
            occurrence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub form: Form,
    pub operand: Operand,
}

impl Leaf {
    pub fn new(form: Form, operand: Operand) -> Self {
        Self { form, operand }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Internal {
    pub op: Op,
    pub children: Vec<MNode>,
    /// Disambiguator among same-operator siblings, `1..=k`.
    pub tag: Option<u32>,
}

impl Internal {
    pub fn new(op: Op, children: Vec<MNode>) -> Self {
        Self {
            op,
            children,
            tag: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MNode {
    Internal(Internal),
    Leaf(Leaf),
}

/// An M-tree. The root is always an untagged `+` node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MTree {
    root: Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MTreeEvalError {
    #[error("division by zero at `{0}`")]
    DivisionByZero(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("root of an M-tree must be an untagged + node")]
pub struct InvalidRoot;

impl MTree {
    pub fn from_root(root: Internal) -> Result<Self, InvalidRoot> {
        if root.op != Op::Add || root.tag.is_some() {
            return Err(InvalidRoot);
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Internal {
        &self.root
    }

    pub fn into_root(self) -> Internal {
        self.root
    }

    /// Calls `f(path, leaf)` for each leaf, where `path` lists the internal
    /// nodes from the root down to the leaf's parent.
    pub fn visit_leaves<'a>(&'a self, mut f: impl FnMut(&[&'a Internal], &'a Leaf)) {
        fn walk<'a>(
            node: &'a Internal,
            path: &mut Vec<&'a Internal>,
            f: &mut impl FnMut(&[&'a Internal], &'a Leaf),
        ) {
            path.push(node);
            for child in &node.children {
                match child {
                    MNode::Leaf(leaf) => f(path, leaf),
                    MNode::Internal(inner) => walk(inner, path, f),
                }
            }
            path.pop();
        }
        walk(&self.root, &mut Vec::new(), &mut f);
    }

    pub fn leaf_count(&self) -> usize {
        let mut n = 0;
        self.visit_leaves(|_, _| n += 1);
        n
    }

    /// True when no parent/child pair matches a merge rule.
    pub fn is_saturated(&self) -> bool {
        fn ok(node: &Internal) -> bool {
            node.children.iter().all(|c| match c {
                MNode::Leaf(_) => true,
                MNode::Internal(inner) => node.op.merge_with(inner.op).is_none() && ok(inner),
            })
        }
        ok(&self.root)
    }
}

/// Wraps a converted binary tree under a `+` root and merges top-down until
/// no parent/child pair matches a merge rule.
pub fn to_mtree(tree: OpTree) -> MTree {
    let mut root = Internal::new(Op::Add, vec![from_op_tree(tree)]);
    saturate(&mut root);
    MTree { root }
}

fn from_op_tree(tree: OpTree) -> MNode {
    match tree {
        OpTree::Leaf(leaf) => MNode::Leaf(leaf),
        OpTree::Node { op, children } => MNode::Internal(Internal::new(
            op,
            children.into_iter().map(from_op_tree).collect(),
        )),
    }
}

/// Applies the merge rules at `node` until none fires, then recurses.
///
/// Children are only visited once their parent is saturated. A child's operator
/// can still change afterwards (`×` to `×-` and back) but only when the parent
/// is `+` or `+/`, which never merge with either.
pub(crate) fn saturate(node: &mut Internal) {
    loop {
        let mut merged = false;
        let children = std::mem::take(&mut node.children);
        for child in children {
            match child {
                MNode::Internal(inner) => match node.op.merge_with(inner.op) {
                    Some(op) => {
                        node.op = op;
                        node.children.extend(inner.children);
                        merged = true;
                    }
                    None => node.children.push(MNode::Internal(inner)),
                },
                leaf => node.children.push(leaf),
            }
        }
        if !merged {
            break;
        }
    }
    for child in &mut node.children {
        if let MNode::Internal(inner) = child {
            saturate(inner);
        }
    }
}

/// Orders siblings and (re)assigns disambiguation tags.
///
/// Leaves come before internal nodes; leaves order by form, then occurrence,
/// then value; internal nodes by operator, then their children in order.
/// When `k >= 2` siblings share an operator they are tagged `1..=k` in that
/// order; otherwise tags are cleared.
pub fn canonicalize(tree: MTree) -> MTree {
    let mut root = tree.root;
    canonicalize_node(&mut root);
    root.tag = None;
    MTree { root }
}

fn canonicalize_node(node: &mut Internal) {
    for child in &mut node.children {
        if let MNode::Internal(inner) = child {
            canonicalize_node(inner);
        }
    }
    node.children.sort_by(cmp_nodes);
    for op in [Op::Add, Op::Mul, Op::MulNeg, Op::AddInv] {
        let k = node
            .children
            .iter()
            .filter(|c| matches!(c, MNode::Internal(i) if i.op == op))
            .count();
        let mut next = 1;
        for child in &mut node.children {
            if let MNode::Internal(inner) = child {
                if inner.op == op {
                    inner.tag = (k >= 2).then_some(next);
                    next += 1;
                }
            }
        }
    }
}

fn cmp_leaves(a: &Leaf, b: &Leaf) -> Ordering {
    a.form
        .cmp(&b.form)
        .then_with(|| a.operand.occurrence.cmp(&b.operand.occurrence))
        .then_with(|| a.operand.literal.total_cmp(&b.operand.literal))
}

/// Sibling order. Assumes both subtrees are already canonical.
fn cmp_nodes(a: &MNode, b: &MNode) -> Ordering {
    match (a, b) {
        (MNode::Leaf(x), MNode::Leaf(y)) => cmp_leaves(x, y),
        (MNode::Leaf(_), MNode::Internal(_)) => Ordering::Less,
        (MNode::Internal(_), MNode::Leaf(_)) => Ordering::Greater,
        (MNode::Internal(x), MNode::Internal(y)) => x.op.cmp(&y.op).then_with(|| {
            for (p, q) in x.children.iter().zip(&y.children) {
                match cmp_nodes(p, q) {
                    Ordering::Equal => continue,
                    other => return other,
                }
            }
            x.children.len().cmp(&y.children.len())
        }),
    }
}

/// Evaluates the tree in double precision.
pub fn eval_mtree(tree: &MTree) -> Result<f64, MTreeEvalError> {
    fn eval(node: &Internal, path: &mut Vec<String>) -> Result<f64, MTreeEvalError> {
        path.push(step_label(node));
        let mut values = Vec::with_capacity(node.children.len());
        for child in &node.children {
            values.push(match child {
                MNode::Leaf(leaf) => {
                    leaf.form
                        .apply(leaf.operand.literal.value())
                        .ok_or_else(|| {
                            MTreeEvalError::DivisionByZero(format!(
                                "{} {}",
                                path.join("_"),
                                LeafDisplay(leaf)
                            ))
                        })?
                }
                MNode::Internal(inner) => eval(inner, path)?,
            });
        }
        let out = match node.op {
            Op::Add => values.iter().sum(),
            Op::Mul => values.iter().product(),
            Op::MulNeg => -values.iter().product::<f64>(),
            Op::AddInv => {
                let s: f64 = values.iter().sum();
                if s == 0.0 {
                    return Err(MTreeEvalError::DivisionByZero(path.join("_")));
                }
                1.0 / s
            }
        };
        path.pop();
        Ok(out)
    }
    eval(&tree.root, &mut Vec::new())
}

fn step_label(node: &Internal) -> String {
    match node.tag {
        Some(k) => format!("{}@{k}", node.op.ascii()),
        None => node.op.ascii().to_string(),
    }
}

struct LeafDisplay<'a>(&'a Leaf);

impl fmt::Display for LeafDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let leaf = self.0;
        write!(f, "{}{}", leaf.form.prefix(), leaf.operand.literal)?;
        if let Some(occ) = leaf.operand.occurrence {
            write!(f, "#{occ}")?;
        }
        Ok(())
    }
}

/// S-expression serialization, e.g. `(+ 4 5 (* 2 3))` or
/// `(+ -8#2 (*@1 2#3 3#4) (*@2 /5#5 6#6))`.
///
/// Leaf prefixes: `-` opposite, `/` reciprocal, `-/` both; `#k` is the
/// occurrence index. Internal nodes print their operator and `@k` tag.
impl fmt::Display for MTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn node(f: &mut fmt::Formatter<'_>, n: &Internal) -> fmt::Result {
            write!(f, "({}", step_label(n))?;
            for child in &n.children {
                f.write_str(" ")?;
                match child {
                    MNode::Leaf(leaf) => write!(f, "{}", LeafDisplay(leaf))?,
                    MNode::Internal(inner) => node(f, inner)?,
                }
            }
            f.write_str(")")
        }
        node(f, &self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(v: &str) -> MNode {
        MNode::Leaf(Leaf::new(
            Form::V,
            Operand::new(Literal::decimal(v).unwrap(), None),
        ))
    }

    fn op_leaf(v: &str) -> OpTree {
        OpTree::Leaf(Leaf::new(
            Form::V,
            Operand::new(Literal::decimal(v).unwrap(), None),
        ))
    }

    fn node(op: Op, children: Vec<OpTree>) -> OpTree {
        OpTree::Node { op, children }
    }

    fn internal(op: Op, children: Vec<MNode>) -> MNode {
        MNode::Internal(Internal::new(op, children))
    }

    fn tree(children: Vec<MNode>) -> MTree {
        MTree::from_root(Internal::new(Op::Add, children)).unwrap()
    }

    #[test]
    fn merge_add_into_add() {
        let t = to_mtree(node(
            Op::Add,
            vec![
                node(Op::Add, vec![op_leaf("1"), op_leaf("2")]),
                op_leaf("3"),
            ],
        ));
        assert_eq!(t.to_string(), "(+ 1 2 3)");
    }

    #[test]
    fn merge_mul_into_mul() {
        let t = to_mtree(node(
            Op::Mul,
            vec![
                node(Op::Mul, vec![op_leaf("1"), op_leaf("2")]),
                op_leaf("3"),
            ],
        ));
        assert_eq!(t.to_string(), "(+ (* 1 2 3))");
    }

    #[test]
    fn merge_add_into_addinv() {
        let t = to_mtree(node(
            Op::AddInv,
            vec![
                node(Op::Add, vec![op_leaf("1"), op_leaf("2")]),
                op_leaf("3"),
            ],
        ));
        assert_eq!(t.to_string(), "(+ (+/ 1 2 3))");
    }

    #[test]
    fn merge_mul_into_mulneg() {
        let t = to_mtree(node(
            Op::MulNeg,
            vec![
                node(Op::Mul, vec![op_leaf("1"), op_leaf("2")]),
                op_leaf("3"),
            ],
        ));
        assert_eq!(t.to_string(), "(+ (*- 1 2 3))");
    }

    #[test]
    fn mul_absorbing_mulneg_becomes_mulneg() {
        let t = to_mtree(node(
            Op::Mul,
            vec![
                op_leaf("1"),
                node(Op::MulNeg, vec![op_leaf("2"), op_leaf("3")]),
            ],
        ));
        assert_eq!(t.to_string(), "(+ (*- 1 2 3))");
    }

    #[test]
    fn mulneg_absorbing_mulneg_becomes_mul() {
        let t = to_mtree(node(
            Op::MulNeg,
            vec![
                op_leaf("1"),
                node(Op::MulNeg, vec![op_leaf("2"), op_leaf("3")]),
            ],
        ));
        assert_eq!(t.to_string(), "(+ (* 1 2 3))");
    }

    #[test]
    fn sign_flips_accumulate_through_one_parent() {
        // ×{×-{a,b}, ×-{c,d}} flips twice and ends as ×.
        let t = to_mtree(node(
            Op::Mul,
            vec![
                node(Op::MulNeg, vec![op_leaf("1"), op_leaf("2")]),
                node(Op::MulNeg, vec![op_leaf("3"), op_leaf("4")]),
            ],
        ));
        assert_eq!(t.to_string(), "(+ (* 1 2 3 4))");
        assert_eq!(eval_mtree(&t).unwrap(), 24.0);
    }

    #[test]
    fn non_merging_pairs_stay() {
        for (p, c) in [
            (Op::Add, Op::Mul),
            (Op::Add, Op::MulNeg),
            (Op::Add, Op::AddInv),
            (Op::Mul, Op::Add),
            (Op::Mul, Op::AddInv),
            (Op::MulNeg, Op::Add),
            (Op::MulNeg, Op::AddInv),
            (Op::AddInv, Op::Mul),
            (Op::AddInv, Op::MulNeg),
            (Op::AddInv, Op::AddInv),
        ] {
            assert_eq!(p.merge_with(c), None, "{p:?} {c:?}");
        }
    }

    #[test]
    fn single_leaf_gets_add_root() {
        let t = canonicalize(to_mtree(op_leaf("7")));
        assert_eq!(t.to_string(), "(+ 7)");
        assert_eq!(eval_mtree(&t).unwrap(), 7.0);
    }

    #[test]
    fn sibling_order_is_irrelevant() {
        let a = tree(vec![
            leaf("5"),
            internal(Op::Mul, vec![leaf("2"), leaf("3")]),
            leaf("4"),
        ]);
        let b = tree(vec![
            internal(Op::Mul, vec![leaf("3"), leaf("2")]),
            leaf("4"),
            leaf("5"),
        ]);
        let (a, b) = (canonicalize(a), canonicalize(b));
        assert_eq!(a.to_string(), b.to_string());
        assert_eq!(a.to_string(), "(+ 4 5 (* 2 3))");
        assert_eq!(eval_mtree(&a).unwrap(), 15.0);
    }

    #[test]
    fn same_op_siblings_get_tags() {
        let t = canonicalize(tree(vec![
            internal(Op::Mul, vec![leaf("4"), leaf("3")]),
            internal(Op::Mul, vec![leaf("1"), leaf("2")]),
            internal(Op::AddInv, vec![leaf("5"), leaf("6")]),
        ]));
        assert_eq!(t.to_string(), "(+ (*@1 1 2) (*@2 3 4) (+/ 5 6))");
        let t = canonicalize(t);
        assert_eq!(t.to_string(), "(+ (*@1 1 2) (*@2 3 4) (+/ 5 6))");
    }

    #[test]
    fn eval_node_semantics() {
        let t = tree(vec![internal(Op::AddInv, vec![leaf("1"), leaf("3")])]);
        assert_eq!(eval_mtree(&t).unwrap(), 0.25);
        let t = tree(vec![internal(Op::MulNeg, vec![leaf("2"), leaf("3")])]);
        assert_eq!(eval_mtree(&t).unwrap(), -6.0);
        let t = tree(vec![MNode::Leaf(Leaf::new(
            Form::NegRecip,
            Operand::new(Literal::decimal("4").unwrap(), None),
        ))]);
        assert_eq!(eval_mtree(&t).unwrap(), -0.25);
    }

    #[test]
    fn eval_reports_division_by_zero() {
        let t = tree(vec![internal(
            Op::AddInv,
            vec![
                leaf("2"),
                MNode::Leaf(Leaf::new(
                    Form::Neg,
                    Operand::new(Literal::decimal("2").unwrap(), None),
                )),
            ],
        )]);
        assert_eq!(
            eval_mtree(&t),
            Err(MTreeEvalError::DivisionByZero("+_+/".into()))
        );
        let t = tree(vec![MNode::Leaf(Leaf::new(
            Form::Recip,
            Operand::new(Literal::decimal("0").unwrap(), None),
        ))]);
        assert!(eval_mtree(&t).is_err());
    }

    #[test]
    fn root_must_be_untagged_add() {
        assert_eq!(
            MTree::from_root(Internal::new(Op::Mul, vec![leaf("1")])),
            Err(InvalidRoot)
        );
    }
}
