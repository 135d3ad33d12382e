//! Dense linear algebra, top-k selection and the deterministic PRNG.
//!
//! Vectors are plain `f64` slices; [`Matrix`] is row-major. Every operation
//! validates shapes and reports mismatches as [`ShapeError`] instead of
//! panicking, since layer dimensions come from user configuration.

mod linalg;
mod rng;
mod topk;

pub use linalg::{
    hadamard, matvec, matvec_transposed, outer_accumulate_rows, sparse_matvec_transposed, Matrix,
};
pub use rng::Prng;
pub use topk::top_k_indices;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("{op}: dimension mismatch, left is {left}, right is {right}")]
    Mismatch {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("top_k_indices: k = {k} must lie in 1..={len}")]
    InvalidK { k: usize, len: usize },
    #[error("matrix dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
}

impl ShapeError {
    pub(crate) fn mismatch(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        ShapeError::Mismatch {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }
}
