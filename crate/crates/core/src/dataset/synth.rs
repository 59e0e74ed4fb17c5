//! Synthetic corpus: random expressions over 2–6 numbers, verbalized as
//! nested "the sum of A and B" phrases. Every generated record is division
//! safe and its equation evaluates to its answer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{eval_expr, BinOp, Expr, Literal};
use crate::mtree::eval_mtree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub id: String,
    pub text: String,
    pub equation: String,
    pub ans: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Relative weights for 2, 3, 4, 5 and 6 operands.
    pub operand_weights: [f64; 5],
    pub min_value: u32,
    pub max_value: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            operand_weights: [0.3, 0.3, 0.2, 0.12, 0.08],
            min_value: 2,
            max_value: 99,
        }
    }
}

const OPENERS: [&str; 4] = ["What is", "Compute", "Find", "Work out"];
const CLOSERS: [&str; 2] = ["?", "."];

fn phrase(op: BinOp, rng: &mut ChaCha8Rng) -> &'static str {
    let choices: &[&str] = match op {
        BinOp::Plus => &["the sum of", "the total of"],
        BinOp::Minus => &["the difference of", "the difference between"],
        BinOp::Times => &["the product of"],
        BinOp::Divide => &["the quotient of", "the ratio of"],
        BinOp::Power => unreachable!("no powers in synthetic data"),
    };
    choices.choose(rng).expect("nonempty")
}

fn random_expr(leaves: usize, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Expr {
    if leaves == 1 {
        let v = rng.gen_range(cfg.min_value..=cfg.max_value);
        return Expr::number(Literal::decimal(&v.to_string()).expect("integer literal"));
    }
    let left = rng.gen_range(1..leaves);
    let op = *[BinOp::Plus, BinOp::Minus, BinOp::Times, BinOp::Divide]
        .choose(rng)
        .expect("nonempty");
    Expr::binary(
        op,
        random_expr(left, cfg, rng),
        random_expr(leaves - left, cfg, rng),
    )
}

fn verbalize(e: &Expr, rng: &mut ChaCha8Rng, out: &mut Vec<String>) {
    match e {
        Expr::Number { literal, .. } => out.push(literal.to_string()),
        Expr::Binary { op, left, right } => {
            out.push(phrase(*op, rng).to_string());
            verbalize(left, rng, out);
            out.push("and".into());
            verbalize(right, rng, out);
        }
        _ => unreachable!("generator emits numbers and binary nodes only"),
    }
}

fn sample_operands(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = cfg.operand_weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in cfg.operand_weights.iter().enumerate() {
        if x < *w {
            return i + 2;
        }
        x -= w;
    }
    cfg.operand_weights.len() + 1
}

/// Generates `n` records deterministically from `seed`.
pub fn generate(n: usize, seed: u64, cfg: &SynthConfig) -> Vec<SyntheticRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = sample_operands(cfg, &mut rng);
        let e = random_expr(k, cfg, &mut rng);
        let Ok(ans) = eval_expr(&e) else { continue };
        // The M-tree can divide by a sum the binary tree never isolates.
        let safe = crate::build_mtree(&e)
            .ok()
            .and_then(|t| eval_mtree(&t).ok())
            .is_some_and(|v| v.is_finite());
        if !safe || !ans.is_finite() || ans.abs() > 1e9 {
            continue;
        }
        let mut words = vec![OPENERS.choose(&mut rng).expect("nonempty").to_string()];
        verbalize(&e, &mut rng, &mut words);
        words.push(CLOSERS.choose(&mut rng).expect("nonempty").to_string());
        out.push(SyntheticRecord {
            id: format!("syn-{:05}", out.len()),
            text: words.join(" "),
            equation: format!("x={e}"),
            ans,
        });
    }
    out
}

/// Serializes records as JSON lines.
pub fn to_json_lines(records: &[SyntheticRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}
