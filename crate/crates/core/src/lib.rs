//! Fractional unobserved-components trend-cycle decomposition.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arma_map;
pub mod error;
pub mod fracops;
pub mod inference;
pub mod optim;
pub mod reduced;
pub mod simulate;
pub mod spline;
pub mod ssmodel;

pub use error::{Error, Result};
