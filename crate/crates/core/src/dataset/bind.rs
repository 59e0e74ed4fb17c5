use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::load::rewrite_equation;
use super::{Problem, CONSTANT_COUNT, ONE_INDEX, PI_INDEX};
use crate::expr::{parse_expression, BinOp, Constant, Expr, Literal, ParseError};

/// Literal spellings that bind to the `pi` constant when the text lacks them.
pub const PI_ALIASES: [&str; 2] = ["3.14", "pi"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("equation does not parse: {0}")]
    Parse(#[from] ParseError),
    #[error("literal {0} matches no value in the text and no constant")]
    UnboundLiteral(String),
}

impl BindError {
    /// Short machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            BindError::Parse(_) => "ParseError",
            BindError::UnboundLiteral(_) => "UnboundLiteral",
        }
    }
}

static FRACTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+(?:\.\d+)?)/(\d+(?:\.\d+)?)$").expect("valid regex"));
static MIXED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d+(?:\.\d+)?)\((\d+(?:\.\d+)?)/(\d+(?:\.\d+)?)\)$").expect("valid regex")
});

enum Composite<'a> {
    Fraction(&'a str, &'a str, &'a Literal),
    Mixed(&'a str, &'a str, &'a str, &'a Literal),
}

fn composites(values: &[Literal]) -> Vec<Composite<'_>> {
    values
        .iter()
        .skip(CONSTANT_COUNT)
        .filter_map(|v| {
            let t = v.text();
            if let Some(c) = MIXED.captures(t) {
                let (_, [a, b, d]) = c.extract();
                Some(Composite::Mixed(a, b, d, v))
            } else if let Some(c) = FRACTION.captures(t) {
                let (_, [n, d]) = c.extract();
                Some(Composite::Fraction(n, d, v))
            } else {
                None
            }
        })
        .collect()
}

fn literal_text(e: &Expr) -> Option<&str> {
    match e {
        Expr::Number { literal, .. } => Some(literal.text()),
        _ => None,
    }
}

/// Replaces `a/b` and `a+b/c` subtrees that spell a fraction or mixed number
/// of the text with that single value.
fn fold_composites(e: Expr, comps: &[Composite]) -> Expr {
    if let Expr::Binary { op, left, right } = &e {
        for c in comps {
            match (c, op) {
                (Composite::Fraction(n, d, v), BinOp::Divide)
                    if literal_text(left) == Some(n) && literal_text(right) == Some(d) =>
                {
                    return Expr::number((*v).clone());
                }
                (Composite::Mixed(a, n, d, v), BinOp::Plus) if literal_text(left) == Some(a) => {
                    if let Expr::Binary {
                        op: BinOp::Divide,
                        left: l2,
                        right: r2,
                    } = right.as_ref()
                    {
                        if literal_text(l2) == Some(n) && literal_text(r2) == Some(d) {
                            return Expr::number((*v).clone());
                        }
                    }
                }
                _ => {}
            }
        }
    }
    match e {
        Expr::Binary { op, left, right } => Expr::binary(
            op,
            fold_composites(*left, comps),
            fold_composites(*right, comps),
        ),
        Expr::Negate(c) => Expr::negate(fold_composites(*c, comps)),
        leaf => leaf,
    }
}

/// Rewrites and parses the problem's equation, folding fractions and mixed
/// numbers that appear as single values in the text.
pub fn prepare_expression(problem: &Problem) -> Result<Expr, BindError> {
    let e = parse_expression(&rewrite_equation(&problem.equation))?;
    Ok(fold_composites(e, &composites(&problem.values)))
}

/// Ties every operand of `e` to an entry of `problem.values`.
///
/// Literals take the earliest unused text value with the same numeric value;
/// once those run out, extra uses share the first one. Without a text match,
/// `1` binds to the constant one and `3.14`/`pi` to the constant pi. Bound
/// operands take the problem's own literal so that evaluation agrees with
/// decoding.
pub fn bind_expression(problem: &Problem, mut e: Expr) -> Result<Expr, BindError> {
    let mut used = vec![false; problem.values.len()];
    let mut failure = None;
    e.for_each_operand_mut(&mut |operand| {
        if failure.is_some() {
            return;
        }
        let occ = match operand {
            Expr::Constant {
                constant: Constant::One,
                ..
            } => Some(ONE_INDEX),
            Expr::Constant {
                constant: Constant::Pi,
                ..
            } => Some(PI_INDEX),
            Expr::Number { literal, .. } => {
                let matches: Vec<usize> = (CONSTANT_COUNT..problem.values.len())
                    .filter(|&i| problem.values[i].value() == literal.value())
                    .collect();
                match matches.iter().find(|&&i| !used[i]) {
                    Some(&i) => Some(i),
                    None if !matches.is_empty() => Some(matches[0]),
                    None if literal.value() == 1.0 => Some(ONE_INDEX),
                    None if PI_ALIASES.contains(&literal.text()) => Some(PI_INDEX),
                    None => {
                        failure = Some(BindError::UnboundLiteral(literal.text().to_string()));
                        None
                    }
                }
            }
            _ => unreachable!("operands are numbers or constants"),
        };
        if let Some(i) = occ {
            used[i] = true;
            *operand = Expr::Number {
                literal: problem.values[i].clone(),
                occurrence: Some(i),
            };
        }
    });
    match failure {
        Some(err) => Err(err),
        None => Ok(e),
    }
}
