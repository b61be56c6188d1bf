//! Entropy-regularized backward stochastic LQ control.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod linalg;
pub mod model;
pub mod policy;
pub mod riccati;
pub mod simulate;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
