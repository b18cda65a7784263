//! Numerical toolkit for the circle skew-product `(x, u) -> (2x mod 1, u + (1 - x)^a)`.
//!
//! The crate builds the explicit first-return inducing scheme on `Y = (0, 1/2)`,
//! certifies hyperbolic times and the induced twist bound, checks the
//! periodic-orbit obstruction to cohomology with a locally constant function,
//! discretises the twisted transfer operators of the induced map, and
//! estimates correlation decay by Monte Carlo.

// NaN must fail range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cohomology;
pub mod dynamics;
pub mod error;
pub mod hyperbolic_times;
pub mod spectral;
pub mod statistics;
pub mod tower;

pub use error::{Error, Result};
