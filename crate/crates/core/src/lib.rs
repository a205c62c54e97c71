//! Atomistic, Cauchy–Born and quasi-nonlocal energies for periodic planar
//! chains, with sharp stability infima, ghost forces, linearized error
//! analysis and convergence sweeps.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod chain;
pub mod checks;
pub mod error;
pub mod models;
pub mod numerics;
pub mod potential;
pub mod stability;

pub use error::{Error, Result};
