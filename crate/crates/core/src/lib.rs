//! Joint species distribution modeling with a multivariate probit whose mean
//! comes from a neural embedding of the environment and whose correlations
//! come from learned species interaction vectors.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod evaluation;
pub mod gradients;
pub mod mlp;
pub mod model;
pub mod mvn;
pub mod seed;
pub mod synth;
pub mod trainer;

pub use data::{Dataset, Observation};
pub use mlp::MlpParams;
pub use model::{CorrelationMatrix, ModelConfig, ModelError, ModelParams};
pub use mvn::{CdfEstimate, MvnError, MvnProblem, Rectangle, SamplerConfig};
