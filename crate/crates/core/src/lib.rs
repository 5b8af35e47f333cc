//! Numerical laboratory for measurable sensitivity of measure-preserving
//! interval maps.

// `!(x > 0.0)` style checks are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
mod error;
mod fixed;
pub mod metrics;
pub mod rng;
pub mod sensitivity;
pub mod systems;

pub use error::{Error, Result};
