//! Sparse factor-augmented VAR estimation, simulation and forecasting.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod estimate;
pub mod forecast;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod select;
pub mod simulate;
pub mod solvers;

pub use error::{FavarError, Result};
