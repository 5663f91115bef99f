//! Guided image super-resolution by a memory-augmented unfolded HQS network.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod degradation;
mod error;
pub mod gradcheck_suite;
pub mod hqs;
pub mod io;
pub mod madunet;
pub mod metrics;
pub mod training;

pub use error::{CoreError, Result};
