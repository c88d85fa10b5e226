//! Multivariate normal primitives: factorization, density, rectangle
//! probabilities and truncated sampling.

mod cdf;
mod cholesky;
mod lattice;
pub mod normal;
mod problem;
mod rect;
mod sampler;

use thiserror::Error;

pub use cdf::{cdf_rectangle, CdfEstimate, DEFAULT_MAX_SAMPLES, DEFAULT_TOL, RANDOMIZATIONS};
pub use cholesky::{
    backward_solve, cholesky, forward_solve, inverse_from_factor, Cholesky, JITTER_SCALE,
};
pub use problem::{CovFactor, MvnProblem};
pub use rect::{clip_rectangle, truncation_bound, ClippedRectangle, Rectangle};
pub use sampler::{sample_truncated, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MvnError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("matrix is not positive definite (pivot {pivot} failed after jitter)")]
    NotPositiveDefinite { pivot: usize },
    #[error("covariance has no usable inverse")]
    SingularCovariance,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("zero-dimensional problem")]
    Empty,
    #[error("mean contains a non-finite entry")]
    NonFiniteMean,
    #[error("invalid rectangle at coordinate {index}: ({lower}, {upper})")]
    InvalidRectangle {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("invalid sampler config: {0}")]
    InvalidSamplerConfig(String),
    #[error("tolerance not reached: estimate {value} ± {error_estimate}")]
    ToleranceNotReached { value: f64, error_estimate: f64 },
}
