//! Seeded random generators and reference oracles for property tests.

use mtree_core::expr::{BinOp, Constant, Expr, Literal};
use mtree_core::mtree::{Form, Leaf, Op, Operand};
use mtree_core::normalize::OpTree;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn literal(rng: &mut ChaCha8Rng) -> Literal {
    let int = rng.gen_range(0..20);
    let text = match rng.gen_range(0..4) {
        0 => format!("{int}.5"),
        1 => format!("{int}.25"),
        _ => int.to_string(),
    };
    Literal::decimal(&text).unwrap()
}

/// Random AST that the printer/parser pair can represent (no unit constant,
/// exponents are plain numbers).
pub fn random_ast(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.1) {
            Expr::constant(Constant::Pi)
        } else {
            Expr::number(literal(rng))
        };
    }
    match rng.gen_range(0..10) {
        0 => Expr::negate(random_ast(rng, depth - 1)),
        1 => Expr::binary(
            BinOp::Power,
            random_ast(rng, depth - 1),
            Expr::number(Literal::decimal(&rng.gen_range(0..4).to_string()).unwrap()),
        ),
        k => {
            let op = [BinOp::Plus, BinOp::Minus, BinOp::Times, BinOp::Divide][k as usize % 4];
            Expr::binary(op, random_ast(rng, depth - 1), random_ast(rng, depth - 1))
        }
    }
}

/// Random arithmetic over `+ - * /` with at most `max_operands` operands,
/// each operand tagged with its left-to-right index as occurrence.
pub fn random_bound_expr(rng: &mut ChaCha8Rng, max_depth: u32, max_operands: usize) -> Expr {
    fn go(rng: &mut ChaCha8Rng, depth: u32, budget: usize) -> Expr {
        if depth == 0 || budget <= 1 || rng.gen_bool(0.2) {
            return Expr::number(Literal::decimal(&rng.gen_range(1..30).to_string()).unwrap());
        }
        let left = rng.gen_range(1..budget);
        let op = *[BinOp::Plus, BinOp::Minus, BinOp::Times, BinOp::Divide]
            .choose(rng)
            .unwrap();
        let l = go(rng, depth - 1, left);
        let r = go(rng, depth - 1, budget - left);
        if rng.gen_bool(0.05) {
            Expr::negate(Expr::binary(op, l, r))
        } else {
            Expr::binary(op, l, r)
        }
    }
    let budget = rng.gen_range(1..=max_operands);
    let mut e = go(rng, max_depth, budget);
    let mut next = 0;
    e.for_each_operand_mut(&mut |o| {
        if let Expr::Number { occurrence, .. } = o {
            *occurrence = Some(next);
            next += 1;
        }
    });
    e
}

/// One random commute or re-bracket move somewhere in the tree.
pub fn rewrite_once(e: &Expr, rng: &mut ChaCha8Rng) -> Expr {
    let sites = count_nodes(e);
    let target = rng.gen_range(0..sites);
    let mut seen = 0;
    rewrite_at(e, target, &mut seen, rng)
}

fn count_nodes(e: &Expr) -> usize {
    match e {
        Expr::Binary { left, right, .. } => 1 + count_nodes(left) + count_nodes(right),
        Expr::Negate(c) => 1 + count_nodes(c),
        _ => 1,
    }
}

fn rewrite_at(e: &Expr, target: usize, seen: &mut usize, rng: &mut ChaCha8Rng) -> Expr {
    let here = *seen;
    *seen += 1;
    if here == target {
        return local_move(e, rng);
    }
    match e {
        Expr::Binary { op, left, right } => {
            let l = rewrite_at(left, target, seen, rng);
            let r = rewrite_at(right, target, seen, rng);
            Expr::binary(*op, l, r)
        }
        Expr::Negate(c) => Expr::negate(rewrite_at(c, target, seen, rng)),
        leaf => leaf.clone(),
    }
}

fn local_move(e: &Expr, rng: &mut ChaCha8Rng) -> Expr {
    let Expr::Binary { op, left, right } = e else {
        return e.clone();
    };
    let (l, r) = (left.as_ref().clone(), right.as_ref().clone());
    let commutes = matches!(op, BinOp::Plus | BinOp::Times);
    if commutes && rng.gen_bool(0.5) {
        return Expr::binary(*op, r, l);
    }
    // (a ∘ b) ∙ c  →  a ∘ (b ∙ c) for + + / + - / * * / * /
    if let Expr::Binary {
        op: inner,
        left: a,
        right: b,
    } = &l
    {
        let ok = matches!(
            (inner, op),
            (BinOp::Plus, BinOp::Plus)
                | (BinOp::Plus, BinOp::Minus)
                | (BinOp::Times, BinOp::Times)
                | (BinOp::Times, BinOp::Divide)
        );
        if ok {
            return Expr::binary(*inner, *a.clone(), Expr::binary(*op, *b.clone(), r));
        }
    }
    // a + (b ∙ c)  →  (a + b) ∙ c, the inverse move
    if let Expr::Binary {
        op: inner,
        left: b,
        right: c,
    } = &r
    {
        let ok = matches!(
            (op, inner),
            (BinOp::Plus, BinOp::Plus)
                | (BinOp::Plus, BinOp::Minus)
                | (BinOp::Times, BinOp::Times)
                | (BinOp::Times, BinOp::Divide)
        );
        if ok {
            return Expr::binary(*inner, Expr::binary(*op, l, *b.clone()), *c.clone());
        }
    }
    if commutes {
        return Expr::binary(*op, r, l);
    }
    e.clone()
}

/// Random operator tree of unrestricted arity over `m` occurrences.
pub fn random_op_tree(rng: &mut ChaCha8Rng, depth: u32, m: usize) -> OpTree {
    if depth == 0 || rng.gen_bool(0.35) {
        let occ = rng.gen_range(0..m);
        let form = *[Form::V, Form::Neg, Form::Recip, Form::NegRecip]
            .choose(rng)
            .unwrap();
        let lit = Literal::decimal(&(occ + 2).to_string()).unwrap();
        return OpTree::Leaf(Leaf::new(form, Operand::new(lit, Some(occ))));
    }
    let op = *[Op::Add, Op::Mul, Op::MulNeg, Op::AddInv]
        .choose(rng)
        .unwrap();
    let k = rng.gen_range(1..=4);
    OpTree::Node {
        op,
        children: (0..k).map(|_| random_op_tree(rng, depth - 1, m)).collect(),
    }
}

/// Independent evaluator: interprets the infix string directly while parsing.
pub fn interpret(text: &str) -> Option<f64> {
    struct P<'a> {
        s: &'a [u8],
        i: usize,
    }
    impl P<'_> {
        fn peek(&self) -> Option<u8> {
            self.s.get(self.i).copied()
        }
        fn sum(&mut self) -> Option<f64> {
            let mut v = self.product()?;
            while let Some(c @ (b'+' | b'-')) = self.peek() {
                self.i += 1;
                let r = self.product()?;
                v = if c == b'+' { v + r } else { v - r };
            }
            Some(v)
        }
        fn product(&mut self) -> Option<f64> {
            let mut v = self.unary()?;
            while let Some(c @ (b'*' | b'/')) = self.peek() {
                self.i += 1;
                let r = self.unary()?;
                if c == b'*' {
                    v *= r;
                } else {
                    if r == 0.0 {
                        return None;
                    }
                    v /= r;
                }
            }
            Some(v)
        }
        fn unary(&mut self) -> Option<f64> {
            if self.peek() == Some(b'-') {
                self.i += 1;
                return Some(-self.unary()?);
            }
            self.power()
        }
        fn power(&mut self) -> Option<f64> {
            let base = self.atom()?;
            if self.peek() == Some(b'^') {
                self.i += 1;
                let e = self.power()?;
                let mut acc = 1.0;
                for _ in 0..(e as u32) {
                    acc *= base;
                }
                return Some(acc);
            }
            Some(base)
        }
        fn atom(&mut self) -> Option<f64> {
            match self.peek()? {
                b'(' => {
                    self.i += 1;
                    let v = self.sum()?;
                    (self.peek() == Some(b')')).then(|| self.i += 1)?;
                    Some(v)
                }
                b'p' => {
                    self.i += 2;
                    Some(std::f64::consts::PI)
                }
                _ => {
                    let start = self.i;
                    while matches!(self.peek(), Some(b'0'..=b'9' | b'.')) {
                        self.i += 1;
                    }
                    std::str::from_utf8(&self.s[start..self.i])
                        .ok()?
                        .parse()
                        .ok()
                }
            }
        }
    }
    let mut p = P {
        s: text.as_bytes(),
        i: 0,
    };
    let v = p.sum()?;
    (p.i == text.len()).then_some(v)
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// A random merge-saturated, canonical M-tree over `m` occurrences.
pub fn random_canonical_mtree(
    rng: &mut ChaCha8Rng,
    depth: u32,
    m: usize,
) -> mtree_core::mtree::MTree {
    use mtree_core::mtree::{canonicalize, to_mtree};
    canonicalize(to_mtree(random_op_tree(rng, depth, m)))
}

/// Literals `2, 3, ...` standing for occurrences `0..m` of [`random_op_tree`].
pub fn occurrence_values(m: usize) -> Vec<Literal> {
    (0..m)
        .map(|occ| Literal::decimal(&(occ + 2).to_string()).unwrap())
        .collect()
}

/// First (parent, child) operator pair that could still merge, if any.
pub fn mergeable_pair(node: &mtree_core::mtree::Internal) -> Option<(Op, Op)> {
    use mtree_core::mtree::MNode;
    node.children.iter().find_map(|c| match c {
        MNode::Internal(child) => {
            if node.op.merge_with(child.op).is_some() {
                Some((node.op, child.op))
            } else {
                mergeable_pair(child)
            }
        }
        MNode::Leaf(_) => None,
    })
}
