//! Variational solvers and diagnostics for weakly coupled critical elliptic
//! systems on symmetric domains.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod energy;
pub mod flow;
pub mod grid;
pub mod io;
pub mod scalar;

pub use error::{Error, Result};
