//! Quantile-function math: pinball loss, distortion risk measures,
//! distorted expectations and the normal CDF.

mod distortion;
mod function;
mod normal;
mod pinball;

pub use distortion::Distortion;
pub use function::{
    comonotone_sum_distance, crossing_rate, distorted_expectation, midpoint_levels, sum_quantiles,
    AnalyticQuantile, DiscreteDistribution, ExplicitGrid, Levels, QuantileFunction,
};
pub use normal::{normal_cdf, normal_cdf_inv, normal_pdf};
pub use pinball::{pinball_loss, PinballKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantileError {
    #[error("quantile level {0} outside [0, 1]")]
    LevelOutOfRange(f64),
    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("{0}")]
    BadParameter(String),
    #[error("quantile values must be nondecreasing in the level")]
    NotMonotone,
    #[error("quantile grids have different resolutions ({0} vs {1})")]
    GridMismatch(usize, usize),
}

#[cfg(test)]
mod tests;
