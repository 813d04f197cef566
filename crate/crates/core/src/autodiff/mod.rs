//! Minimal reverse-mode automatic differentiation: tape, dense layers,
//! Fourier level embedding and Adam.

mod adam;
pub mod gradcheck;
mod nn;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use nn::{cosine_sum, fourier_features, Activation, FourierEmbedding, FourierMode, Linear, Mlp};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput((usize, usize)),
    #[error("non-finite value produced by `{op}` (node {node})")]
    NonFinite { node: usize, op: &'static str },
    #[error("non-finite gradient for parameter `{0}`; step skipped")]
    NonFiniteGradient(String),
    #[error("shape mismatch for {what}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        what: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("quantile level {0} outside [0, 1]")]
    LevelOutOfRange(f64),
    #[error("invalid layout: {0}")]
    BadLayout(String),
}
