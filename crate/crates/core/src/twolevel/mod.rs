//! Two-level (sum-of-products) minimization.
//!
//! [`espresso_minimize`] is the heuristic used by the compiler; [`qm_minimize`]
//! is an exact Quine–McCluskey minimizer kept as an oracle for small tables.

mod cover;
mod covering;
mod cube;
mod espresso;
mod qm;

pub use cover::{cover_function, Cost, Cover};
pub use cube::{Cube, Literal, MAX_WIDTH};
pub use espresso::{
    espresso_minimize, espresso_minimize_dc, espresso_trace, expand, irredundant, minimize_table,
    reduce,
};
pub use qm::{exact_minimize, prime_implicants, qm_minimize, QM_MAX_INPUTS};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TwoLevelError {
    #[error("cover width {width} exceeds the supported maximum of {max}")]
    TooWide { width: usize, max: usize },
    #[error("cube width {found} does not match cover width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid cube character {0:?}; expected one of 0, 1, -")]
    BadCubeChar(char),
    #[error("ON-set and OFF-set overlap at minterm {minterm}")]
    Overlap { minterm: u32 },
}
