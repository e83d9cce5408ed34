//! Bayesian nonparametric conditional quantile and distribution models
//! built from tensor-product B-splines with simplex-constrained coefficients.

// `!(a < b)` is used deliberately so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bspline;
pub mod coeff;
pub mod datakit;
pub mod error;
pub mod inference;
pub mod likelihood;
pub mod sampler;
pub mod warmstart;

pub use error::{Error, Result};
