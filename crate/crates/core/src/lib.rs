//! Numerical laboratory for steady degenerate curl-curl systems with boundary-distance
//! weights: discretization, operators, functional inequalities, solvers and truncation.

// `!(x > 0.0)` style guards also reject NaN; axis loops index several arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fields;
pub mod geometry;
pub mod inequalities;
pub mod operators;
pub mod solver;
pub mod truncation;

pub use error::{Error, Result};
