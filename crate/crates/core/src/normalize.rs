//! Bracket removal and operator conversion.
//!
//! [`expand`] turns an [`Expr`] into a flat sum of signed products. Products
//! distribute over sums in numerator position; a sum in denominator position
//! stays grouped as an [`Base::InvGroup`] factor. [`apply_operator_conversion`]
//! then rewrites that sum into a binary tree over the four M-tree operators.

use std::ops::{Mul, Neg};

use thiserror::Error;

use crate::expr::{BinOp, Constant, Expr, Literal};
use crate::mtree::{Form, Leaf, Op, Operand};

/// Largest integer exponent that is expanded into a repeated product.
pub const MAX_EXPONENT: u32 = 12;

/// Upper bound on the number of terms an expansion may produce.
pub const MAX_TERMS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Pos,
    Neg,
}

impl Neg for Sign {
    type Output = Sign;
    fn neg(self) -> Sign {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }
}

impl Mul for Sign {
    type Output = Sign;
    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Base {
    Number(Literal, Option<usize>),
    Constant(Constant, Option<usize>),
    /// Reciprocal of the sum of at least two terms.
    InvGroup(Vec<Term>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedFactor {
    pub sign: Sign,
    pub recip: bool,
    pub base: Base,
}

impl SignedFactor {
    fn plain(base: Base) -> Self {
        Self {
            sign: Sign::Pos,
            recip: false,
            base,
        }
    }

    fn is_unit_constant(&self) -> bool {
        matches!(self.base, Base::Constant(Constant::One, None))
    }
}

/// `sign × (product of factors)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub sign: Sign,
    pub factors: Vec<SignedFactor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("unsupported exponent {0}: only integer exponents 0..={MAX_EXPONENT} are expanded")]
    UnsupportedExponent(String),
    #[error("expansion exceeds {MAX_TERMS} terms")]
    TooManyTerms,
}

/// Binary tree over the M-tree operators, as produced by operator conversion.
///
/// Nodes have two children, except a `×-` node wrapping a lone `+/` factor.
#[derive(Debug, Clone, PartialEq)]
pub enum OpTree {
    Leaf(Leaf),
    Node { op: Op, children: Vec<OpTree> },
}

/// Removes brackets, producing a sum of signed products.
pub fn expand(e: &Expr) -> Result<Vec<Term>, NormalizeError> {
    match e {
        Expr::Number {
            literal,
            occurrence,
        } => Ok(vec![single(Base::Number(literal.clone(), *occurrence))]),
        Expr::Constant {
            constant,
            occurrence,
        } => Ok(vec![single(Base::Constant(*constant, *occurrence))]),
        Expr::Negate(child) => Ok(negated(expand(child)?)),
        Expr::Binary { op, left, right } => match op {
            BinOp::Plus | BinOp::Minus => {
                let mut terms = expand(left)?;
                let rhs = expand(right)?;
                terms.extend(if *op == BinOp::Minus {
                    negated(rhs)
                } else {
                    rhs
                });
                check_size(terms)
            }
            BinOp::Times => multiply(&expand(left)?, &expand(right)?),
            BinOp::Divide => multiply(&expand(left)?, &reciprocal(expand(right)?)?),
            BinOp::Power => {
                let k = integer_exponent(right)?;
                let base = expand(left)?;
                if k == 0 {
                    log::warn!("exponent 0 in `{e}` replaced by the constant 1");
                    return Ok(vec![single(Base::Constant(Constant::One, None))]);
                }
                let mut acc = base.clone();
                for _ in 1..k {
                    acc = multiply(&acc, &base)?;
                }
                Ok(acc)
            }
        },
    }
}

fn single(base: Base) -> Term {
    Term {
        sign: Sign::Pos,
        factors: vec![SignedFactor::plain(base)],
    }
}

fn negated(mut terms: Vec<Term>) -> Vec<Term> {
    for t in &mut terms {
        t.sign = -t.sign;
    }
    terms
}

fn check_size(terms: Vec<Term>) -> Result<Vec<Term>, NormalizeError> {
    if terms.len() > MAX_TERMS {
        Err(NormalizeError::TooManyTerms)
    } else {
        Ok(terms)
    }
}

fn integer_exponent(e: &Expr) -> Result<u32, NormalizeError> {
    let Expr::Number { literal, .. } = e else {
        return Err(NormalizeError::UnsupportedExponent(e.to_string()));
    };
    let v = literal.value();
    if v.fract() != 0.0 || !(0.0..=MAX_EXPONENT as f64).contains(&v) {
        return Err(NormalizeError::UnsupportedExponent(literal.text().into()));
    }
    Ok(v as u32)
}

/// Distributes left to right. The unit constant is dropped from products that
/// have other factors.
fn multiply(a: &[Term], b: &[Term]) -> Result<Vec<Term>, NormalizeError> {
    if a.len().saturating_mul(b.len()) > MAX_TERMS {
        return Err(NormalizeError::TooManyTerms);
    }
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            let mut factors: Vec<SignedFactor> =
                x.factors.iter().chain(&y.factors).cloned().collect();
            if factors.len() > 1 {
                factors.retain(|f| !f.is_unit_constant());
                if factors.is_empty() {
                    factors.push(SignedFactor::plain(Base::Constant(Constant::One, None)));
                }
            }
            out.push(Term {
                sign: x.sign * y.sign,
                factors,
            });
        }
    }
    Ok(out)
}

/// `1 / (sum of terms)`. A single product is inverted factor by factor
/// (reciprocal flags toggle, groups are unwrapped back into sums); a genuine
/// sum becomes one group factor.
fn reciprocal(terms: Vec<Term>) -> Result<Vec<Term>, NormalizeError> {
    if terms.len() != 1 {
        return Ok(vec![single(Base::InvGroup(terms))]);
    }
    let term = terms.into_iter().next().expect("one term");
    let mut acc = vec![Term {
        sign: term.sign,
        factors: Vec::new(),
    }];
    for f in term.factors {
        let inverted = match f.base {
            Base::InvGroup(inner) if !f.recip => inner,
            base => vec![Term {
                sign: Sign::Pos,
                factors: vec![SignedFactor {
                    sign: f.sign,
                    recip: !f.recip,
                    base,
                }],
            }],
        };
        acc = multiply(&acc, &inverted)?;
    }
    Ok(acc)
}

/// Rewrites a sum of products into a binary tree over `+`, `×`, `×-`, `+/`.
///
/// Subtraction becomes an opposite leaf, division a reciprocal leaf, a negated
/// product a `×-` node and a grouped denominator a `+/` node. Sums and
/// products nest left-deep in term order.
pub fn apply_operator_conversion(terms: &[Term]) -> OpTree {
    assert!(!terms.is_empty(), "conversion needs at least one term");
    fold(Op::Add, Op::Add, terms.iter().map(convert_term).collect())
}

fn fold(inner: Op, outer: Op, mut items: Vec<OpTree>) -> OpTree {
    if items.len() == 1 {
        return items.pop().expect("one item");
    }
    let last = items.pop().expect("two items");
    let head = if items.len() == 1 {
        items.pop().expect("one item")
    } else {
        fold(inner, inner, items)
    };
    OpTree::Node {
        op: outer,
        children: vec![head, last],
    }
}

fn convert_term(term: &Term) -> OpTree {
    let sign = term.factors.iter().fold(term.sign, |s, f| s * f.sign);
    if let [f] = term.factors.as_slice() {
        return match &f.base {
            Base::InvGroup(group) => {
                let node = convert_group(group);
                if sign == Sign::Neg {
                    OpTree::Node {
                        op: Op::MulNeg,
                        children: vec![node],
                    }
                } else {
                    node
                }
            }
            base => leaf(base, sign == Sign::Neg, f.recip),
        };
    }
    let items = term
        .factors
        .iter()
        .map(|f| match &f.base {
            Base::InvGroup(group) => convert_group(group),
            base => leaf(base, false, f.recip),
        })
        .collect();
    let outer = if sign == Sign::Neg {
        Op::MulNeg
    } else {
        Op::Mul
    };
    fold(Op::Mul, outer, items)
}

fn convert_group(group: &[Term]) -> OpTree {
    let items: Vec<OpTree> = group.iter().map(convert_term).collect();
    if items.len() == 1 {
        // Groups are built from two or more terms; handle the degenerate case anyway.
        return OpTree::Node {
            op: Op::AddInv,
            children: items,
        };
    }
    fold(Op::Add, Op::AddInv, items)
}

fn leaf(base: &Base, negated: bool, recip: bool) -> OpTree {
    let operand = match base {
        Base::Number(lit, occ) => Operand::new(lit.clone(), *occ),
        Base::Constant(c, occ) => Operand::new(c.literal(), *occ),
        Base::InvGroup(_) => unreachable!("groups are converted separately"),
    };
    OpTree::Leaf(Leaf::new(Form::from_bits(negated, recip), operand))
}

/// Prints a sum of terms back to an expression that expands to the same terms.
pub fn terms_to_expr(terms: &[Term]) -> Expr {
    let mut it = terms.iter().map(term_to_expr);
    let first = it.next().expect("nonempty sum");
    it.fold(first, |acc, t| Expr::binary(BinOp::Plus, acc, t))
}

fn term_to_expr(term: &Term) -> Expr {
    let sign = term.factors.iter().fold(term.sign, |s, f| s * f.sign);
    let mut acc: Option<Expr> = None;
    for f in &term.factors {
        let (operand, divides) = match &f.base {
            Base::Number(lit, occ) => (
                Expr::Number {
                    literal: lit.clone(),
                    occurrence: *occ,
                },
                f.recip,
            ),
            Base::Constant(c, occ) => (
                Expr::Constant {
                    constant: *c,
                    occurrence: *occ,
                },
                f.recip,
            ),
            Base::InvGroup(group) => (terms_to_expr(group), !f.recip),
        };
        acc = Some(match (acc, divides) {
            (None, false) => operand,
            (None, true) => Expr::binary(BinOp::Divide, Expr::constant(Constant::One), operand),
            (Some(a), false) => Expr::binary(BinOp::Times, a, operand),
            (Some(a), true) => Expr::binary(BinOp::Divide, a, operand),
        });
    }
    let product = acc.expect("nonempty product");
    match sign {
        Sign::Pos => product,
        Sign::Neg => Expr::negate(product),
    }
}
