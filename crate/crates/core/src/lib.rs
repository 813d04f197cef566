//! Distributional GFlowNets trained by quantile matching, with flow-matching
//! and trajectory-balance baselines, risk-sensitive policies and exactly
//! checkable toy environments.
//!
//! The numeric core ([`autodiff`], [`quantile`], [`losses`]) is generic over
//! [`Scalar`]; the aliases below fix it to `f64`, which is what training,
//! checkpoints and the oracles use.

pub mod autodiff;
pub mod config;
pub mod env;
pub mod hypergrid;
pub mod losses;
pub mod quantile;
pub mod seqgen;
pub mod trainer;
mod scalar;

pub use scalar::Scalar;

/// Scalar used by training and the oracles.
pub type Real = f64;
pub type Tape = autodiff::Tape<Real>;
pub type ParamStore = autodiff::ParamStore<Real>;
pub type Adam = autodiff::Adam<Real>;
pub type Gradients = autodiff::Gradients<Real>;
