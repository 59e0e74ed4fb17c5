//! Canonical M-tree representation of arithmetic solution expressions.
//!
//! The pipeline runs `parse → expand → convert → merge → canonicalize`, after
//! which [`codec`] turns the tree into per-value codes and count vectors and
//! back again.

pub mod codec;
pub mod dataset;
pub mod expr;
pub mod mtree;
pub mod normalize;

use thiserror::Error;

pub use codec::{CodeSet, CodeVector, CodeVocab, MTreeCode};
pub use expr::{eval_expr, parse_expression, Expr, Literal};
pub use mtree::{canonicalize, eval_mtree, to_mtree, MTree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Parse(#[from] expr::ParseError),
    #[error(transparent)]
    Normalize(#[from] normalize::NormalizeError),
}

/// Canonical M-tree of an already parsed expression.
pub fn build_mtree(e: &Expr) -> Result<MTree, normalize::NormalizeError> {
    let terms = normalize::expand(e)?;
    let converted = normalize::apply_operator_conversion(&terms);
    Ok(canonicalize(to_mtree(converted)))
}

/// Parses and canonicalizes in one step.
pub fn canonical_mtree(text: &str) -> Result<MTree, PipelineError> {
    Ok(build_mtree(&parse_expression(text)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_expressions_unify() {
        let a = canonical_mtree("2*3+4+5").unwrap();
        let b = canonical_mtree("5+3*2+4").unwrap();
        let c = canonical_mtree("4+(3*2+5)").unwrap();
        assert_eq!(a.to_string(), b.to_string());
        assert_eq!(a.to_string(), c.to_string());
        assert_eq!(eval_mtree(&a).unwrap(), 15.0);
    }

    #[test]
    fn subtraction_of_product_is_mulneg_sibling() {
        let t = canonical_mtree("1-2*3").unwrap();
        assert_eq!(t.to_string(), "(+ 1 (*- 2 3))");
    }

    #[test]
    fn divided_sum_is_addinv_under_mul() {
        let t = canonical_mtree("2/(1+3)").unwrap();
        assert_eq!(t.to_string(), "(+ (* 2 (+/ 1 3)))");
        assert_eq!(eval_mtree(&t).unwrap(), 0.5);
    }
}
