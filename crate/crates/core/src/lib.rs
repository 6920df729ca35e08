//! Numerical laboratory for the damped focusing Klein-Gordon equation
//! `u_tt + 2α u_t - Δu + u = |u|^{p-1} u` near one and two solitons.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod evolve;
pub mod exec;
pub mod field;
pub mod groundstate;
pub mod manifold;
pub mod modulation;
pub mod numerics;
pub mod spectrum;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
