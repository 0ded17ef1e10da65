//! Geographically weighted penalized compositional regression.
//!
//! Per-unit regression coefficients for log-contrast compositional
//! predictors are fused across areal units by a weighted minimax concave
//! penalty on all pairwise differences, with weights decaying in graph
//! distance. Fits are computed by ADMM, the penalty level is chosen with a
//! modified BIC, and clusters are read off the exactly-fused pairs.
//!
//! The crate is `no_std` (it needs `alloc`); enable the `std` feature to use
//! the platform math library.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod assignment;
pub mod clustering;
pub mod compositional;
pub mod error;
pub mod graph;
pub mod penalty;
mod refine;
pub mod selection;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
