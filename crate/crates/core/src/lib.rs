//! Helmholtz conditions and the inverse problem of the calculus of
//! variations for second-order differential equations on regular Lie
//! algebroids.
//!
//! Every scalar in the system is evaluated as a second-order jet
//! ([`jets::Jet2`]), so all partial derivatives are exact up to
//! floating-point roundoff. Scalar fields are given as expressions in the
//! base coordinates `x1..xm` and fiber coordinates `y1..yn`
//! ([`expr::Expr`]).
//!
//! The main entry points are [`sode::classify`], which certifies a given
//! SODE section and multiplier map as variational, weak variational or
//! neither, and [`variational::sode_from_lagrangian`] /
//! [`variational::reconstruct_lagrangian`] for the Lagrangian side.

// Index loops mirror the formulas; NaN must fail threshold tests.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod algebroid;
pub mod cli;
pub mod expr;
pub mod jets;
pub mod model;
pub mod morphism;
pub mod prolongation;
pub mod report;
pub mod sampling;
pub mod sode;
pub mod variational;

mod linalg;

use thiserror::Error;

pub use algebroid::{AtiyahData, LieAlgebroid, OneSection, PointE, StructureConstants};
pub use expr::{parse, Expr, ParseError};
pub use jets::{EvalContext, EvalError, Jet1, Jet2};
pub use report::Report;
pub use sode::{Classification, MultiplierMap, SodeSection};
pub use variational::Lagrangian;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("structure constants are not antisymmetric: c^{gamma}_{alpha}{beta} = {forward}, c^{gamma}_{beta}{alpha} = {backward}")]
    NotAntisymmetric {
        gamma: usize,
        alpha: usize,
        beta: usize,
        forward: f64,
        backward: f64,
    },
    #[error("algebroid is not regular on the sample: anchor rank {first} at {first_point:?} but {other} at {other_point:?}")]
    Regularity {
        first: usize,
        first_point: Vec<f64>,
        other: usize,
        other_point: Vec<f64>,
    },
    #[error("degenerate {what} at {point:?} (condition number {condition:e})")]
    Degenerate {
        what: &'static str,
        point: Vec<f64>,
        condition: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("lagrangian reconstruction failed: {0}")]
    ReconstructionFailed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Base coordinate names `x1..xm`.
pub fn base_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("x{i}")).collect()
}

/// Fiber coordinate names `y1..yn`.
pub fn fiber_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("y{i}")).collect()
}
