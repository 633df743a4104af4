//! Asymptotic mean value Laplacians `Δ_{μ,r}u(x) = r⁻²(⨍_{B_r(x)} u dμ − u(x))`
//! on metric measure spaces: ball integration with error accounting, the
//! `r → 0` study, discrete operators on atom clouds and canned verification
//! suites.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod field;
pub mod operators;
pub mod quadrature;
pub mod space;
pub mod spaces;
pub mod suites;

pub use error::{AmvError, Result};
