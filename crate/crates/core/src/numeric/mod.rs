//! Dense linear algebra, a gradient tape and Adam.

mod adam;
mod matrix;
mod sparse;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use matrix::{log_sigmoid, sigmoid, softmax, Matrix};
pub use sparse::CsrMatrix;
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("data length {len} does not fit a {rows}x{cols} matrix")]
    LengthMismatch { rows: usize, cols: usize, len: usize },
    #[error("{op}: expected a column vector, got {rows}x{cols}")]
    NotColumn {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("expected a 1x1 scalar, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("tape already consumed by backward")]
    TapeConsumed,
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("index {index} out of bounds for {bound}")]
    IndexOutOfBounds { index: usize, bound: usize },
    #[error("{op}: segment offsets do not partition {rows} rows")]
    BadSegments { op: &'static str, rows: usize },
    #[error("expected {expected} parameter tensors, got {got}")]
    ParameterCount { expected: usize, got: usize },
}
