//! Policy compilation: AND/OR formulas to (t,n) threshold trees to share matrices.

mod matrix;
mod parse;
mod tree;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::field::FieldElement;

pub use matrix::{LeafPosition, MatrixRow, PolicyId, PolicyMatrix, PolicyRecord, PolicyRegistry, RootChild, StoreOutcome};
pub use parse::{parse_policy, Formula};
pub use tree::{assign_shares, build_tree, FixedShares, Gate, Leaf, Node, ShareSource, ThresholdTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("policies may nest at most two gate levels")]
    TooDeep,
    #[error("gate without children")]
    EmptyGate,
    #[error("invalid threshold ({t},{n})")]
    InvalidThreshold { t: usize, n: usize },
    #[error("could not draw nonzero shares")]
    ShareSampling,
    #[error("need {need} shares, have {have}")]
    InsufficientShares { have: usize, need: usize },
    #[error("duplicate share x-coordinate {0}")]
    DuplicateX(u64),
    #[error("share x-coordinate must be nonzero")]
    ZeroX,
    #[error("malformed policy matrix: {0}")]
    Malformed(String),
}

/// Lagrange basis coefficients `lambda_i(0) = prod_{j != i} x_j / (x_j - x_i)`.
///
/// The caller guarantees distinct nonzero `xs` below the modulus.
pub fn lagrange_at_zero(xs: &[u64], field: crate::field::PrimeField) -> Vec<FieldElement> {
    xs.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let xi = field.element(xi);
            let (num, den) = xs.iter().enumerate().filter(|(j, _)| *j != i).fold(
                (field.one(), field.one()),
                |(num, den), (_, &xj)| {
                    let xj = field.element(xj);
                    (num * xj, den * (xj - xi))
                },
            );
            num * den.inv().expect("x-coordinates are distinct")
        })
        .collect()
}

/// Checks that `xs` holds at least `t` distinct nonzero coordinates.
pub fn check_xs(xs: &[u64], t: usize) -> Result<(), PolicyError> {
    if xs.len() < t || t == 0 {
        return Err(PolicyError::InsufficientShares { have: xs.len(), need: t.max(1) });
    }
    let mut seen = BTreeSet::new();
    for &x in xs {
        if x == 0 {
            return Err(PolicyError::ZeroX);
        }
        if !seen.insert(x) {
            return Err(PolicyError::DuplicateX(x));
        }
    }
    Ok(())
}

/// Interpolates the first `t` shares at `x = 0`.
pub fn reconstruct_secret(shares: &[(u64, FieldElement)], t: usize) -> Result<FieldElement, PolicyError> {
    let xs: Vec<u64> = shares.iter().map(|(x, _)| *x).collect();
    check_xs(&xs, t)?;
    let field = shares[0].1.field();
    let lambdas = lagrange_at_zero(&xs[..t], field);
    Ok(shares[..t]
        .iter()
        .zip(lambdas)
        .fold(field.zero(), |acc, ((_, y), l)| acc + *y * l))
}
