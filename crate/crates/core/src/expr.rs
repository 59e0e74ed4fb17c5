//! Solution-expression syntax trees: parsing, printing and evaluation.
//!
//! Grammar (whitespace insignificant, an optional leading `x=` is stripped):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' power)?        exponent must reduce to a number
//! primary := number | 'pi' | 'π' | '(' sum ')'
//! ```
//!
//! `×` and `÷` are accepted for `*` and `/`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A numeric literal, kept both as normalized text and as a double.
///
/// The text is what ordering and equality use; the double is what
/// evaluation uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Literal {
    text: String,
    value: f64,
}

impl Literal {
    pub fn new(text: impl Into<String>, value: f64) -> Self {
        Self {
            text: text.into(),
            value,
        }
    }

    /// Parses an unsigned decimal such as `12`, `0.50` or `.5` and
    /// normalizes its spelling (`0.50` becomes `0.5`, `007` becomes `7`).
    pub fn decimal(raw: &str) -> Option<Self> {
        let text = normalize_decimal(raw)?;
        let value = text.parse::<f64>().ok()?;
        value.is_finite().then_some(Self { text, value })
    }

    pub fn pi() -> Self {
        Self::new("pi", std::f64::consts::PI)
    }

    pub fn one() -> Self {
        Self::new("1", 1.0)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Total order: numeric value first, spelling as tie-break.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| self.text.cmp(&other.text))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn normalize_decimal(raw: &str) -> Option<String> {
    let (int, frac) = match raw.split_once('.') {
        Some((i, f)) => (i, f),
        None => (raw, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let int = int.trim_start_matches('0');
    let frac = frac.trim_end_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    Some(if frac.is_empty() {
        int.to_string()
    } else {
        format!("{int}.{frac}")
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constant {
    One,
    Pi,
}

impl Constant {
    pub fn literal(self) -> Literal {
        match self {
            Constant::One => Literal::one(),
            Constant::Pi => Literal::pi(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Plus,
    Minus,
    Times,
    Divide,
    Power,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Plus => '+',
            BinOp::Minus => '-',
            BinOp::Times => '*',
            BinOp::Divide => '/',
            BinOp::Power => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Plus | BinOp::Minus => 1,
            BinOp::Times | BinOp::Divide => 2,
            BinOp::Power => 4,
        }
    }
}

/// Binary syntax tree of a solution expression.
///
/// `occurrence` links an operand to an entry of the problem's value list once
/// the expression has been bound; it is `None` for free-standing expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Number {
        literal: Literal,
        occurrence: Option<usize>,
    },
    Constant {
        constant: Constant,
        occurrence: Option<usize>,
    },
    Binary {
        op: BinOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Negate(Box<Expr>),
}

impl Expr {
    pub fn number(literal: Literal) -> Self {
        Expr::Number {
            literal,
            occurrence: None,
        }
    }

    pub fn constant(constant: Constant) -> Self {
        Expr::Constant {
            constant,
            occurrence: None,
        }
    }

    pub fn binary(op: BinOp, left: Expr, right: Expr) -> Self {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn negate(child: Expr) -> Self {
        Expr::Negate(Box::new(child))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Number { .. } | Expr::Constant { .. } => 5,
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Negate(_) => 3,
        }
    }

    /// Visits operand leaves left to right.
    pub fn for_each_operand_mut(&mut self, f: &mut impl FnMut(&mut Expr)) {
        match self {
            Expr::Number { .. } | Expr::Constant { .. } => f(self),
            Expr::Binary { left, right, .. } => {
                left.for_each_operand_mut(f);
                right.for_each_operand_mut(f);
            }
            Expr::Negate(child) => child.for_each_operand_mut(f),
        }
    }

    /// Number of operand leaves.
    pub fn operand_count(&self) -> usize {
        match self {
            Expr::Number { .. } | Expr::Constant { .. } => 1,
            Expr::Binary { left, right, .. } => left.operand_count() + right.operand_count(),
            Expr::Negate(child) => child.operand_count(),
        }
    }
}

/// Prints ASCII infix with the fewest brackets that parse back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number { literal, .. } => write!(f, "{literal}"),
            Expr::Constant { constant, .. } => match constant {
                Constant::One => f.write_str("1"),
                Constant::Pi => f.write_str("pi"),
            },
            Expr::Negate(child) => {
                if child.precedence() < 3 {
                    write!(f, "-({child})")
                } else {
                    write!(f, "-{child}")
                }
            }
            Expr::Binary { op, left, right } => {
                let p = op.precedence();
                let left_parens = match op {
                    BinOp::Power => left.precedence() < 5,
                    _ => left.precedence() < p,
                };
                let right_parens = match op {
                    BinOp::Power => right.precedence() < 5,
                    _ => right.precedence() <= p,
                };
                write_operand(f, left, left_parens)?;
                write!(f, "{}", op.symbol())?;
                write_operand(f, right, right_parens)
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Token class the parser wanted when it gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Operand,
    Operator,
    ClosingBracket,
    NumericExponent,
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expected::Operand => "operand",
            Expected::Operator => "operator or end of input",
            Expected::ClosingBracket => "')'",
            Expected::NumericExponent => "numeric exponent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    EmptyInput,
    #[error("syntax error at character {position}: expected {expected}")]
    Syntax { position: usize, expected: Expected },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("exponent is not a number in `{0}`")]
    NonNumericExponent(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Literal),
    Pi,
    Op(char),
    Open,
    Close,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '0'..='9' | '.' => {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let raw: String = chars[start..i].iter().collect();
                let lit = Literal::decimal(&raw).ok_or(ParseError::Syntax {
                    position: start,
                    expected: Expected::Operand,
                })?;
                out.push((start, Tok::Num(lit)));
                continue;
            }
            '+' | '-' | '*' | '/' | '^' => out.push((start, Tok::Op(c))),
            '×' => out.push((start, Tok::Op('*'))),
            '÷' => out.push((start, Tok::Op('/'))),
            '(' => out.push((start, Tok::Open)),
            ')' => out.push((start, Tok::Close)),
            'π' => out.push((start, Tok::Pi)),
            'p' | 'P' if matches!(chars.get(i + 1), Some('i' | 'I')) => {
                out.push((start, Tok::Pi));
                i += 2;
                continue;
            }
            _ => {
                return Err(ParseError::Syntax {
                    position: start,
                    expected: Expected::Operand,
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn fail<T>(&self, expected: Expected) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            position: self.offset(),
            expected,
        })
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Plus } else { BinOp::Minus };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' {
                BinOp::Times
            } else {
                BinOp::Divide
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::negate(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let at = self.offset();
            let exponent = self.power()?;
            if !matches!(exponent, Expr::Number { .. }) {
                return Err(ParseError::Syntax {
                    position: at,
                    expected: Expected::NumericExponent,
                });
            }
            return Ok(Expr::binary(BinOp::Power, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(lit)) => {
                self.pos += 1;
                Ok(Expr::number(lit))
            }
            Some(Tok::Pi) => {
                self.pos += 1;
                Ok(Expr::constant(Constant::Pi))
            }
            Some(Tok::Open) => {
                self.pos += 1;
                let inner = self.sum()?;
                match self.peek() {
                    Some(Tok::Close) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => self.fail(Expected::ClosingBracket),
                }
            }
            _ => self.fail(Expected::Operand),
        }
    }
}

/// Parses an infix solution expression. A leading `x=` is dropped.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let body = strip_unknown_prefix(text);
    if body.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let toks = lex(body)?;
    let offset = text.chars().count() - body.chars().count();
    let toks = toks.into_iter().map(|(p, t)| (p + offset, t)).collect();
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.chars().count(),
    };
    let expr = parser.sum()?;
    if parser.pos != parser.toks.len() {
        return parser.fail(Expected::Operator);
    }
    Ok(expr)
}

fn strip_unknown_prefix(text: &str) -> &str {
    let trimmed = text.trim_start();
    let mut chars = trimmed.char_indices();
    if let Some((_, 'x' | 'X')) = chars.next() {
        let rest = trimmed[1..].trim_start();
        if let Some(after) = rest.strip_prefix('=') {
            return after;
        }
    }
    text
}

/// Evaluates in IEEE double precision.
pub fn eval_expr(e: &Expr) -> Result<f64, EvalError> {
    match e {
        Expr::Number { literal, .. } => Ok(literal.value()),
        Expr::Constant { constant, .. } => Ok(constant.literal().value()),
        Expr::Negate(child) => Ok(-eval_expr(child)?),
        Expr::Binary { op, left, right } => {
            let l = eval_expr(left)?;
            match op {
                BinOp::Power => {
                    let Expr::Number { literal, .. } = right.as_ref() else {
                        return Err(EvalError::NonNumericExponent(e.to_string()));
                    };
                    let k = literal.value();
                    if k.fract() == 0.0 && k.abs() <= i32::MAX as f64 {
                        Ok(l.powi(k as i32))
                    } else {
                        Ok(l.powf(k))
                    }
                }
                _ => {
                    let r = eval_expr(right)?;
                    match op {
                        BinOp::Plus => Ok(l + r),
                        BinOp::Minus => Ok(l - r),
                        BinOp::Times => Ok(l * r),
                        BinOp::Divide if r == 0.0 => Err(EvalError::DivisionByZero(e.to_string())),
                        BinOp::Divide => Ok(l / r),
                        BinOp::Power => unreachable!(),
                    }
                }
            }
        }
    }
}
