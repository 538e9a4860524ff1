//! Discrete fractional Kirchhoff equations with logarithmic nonlinearity on
//! truncated lattices `[-L, L]^d ⊂ Z^d`.
//!
//! The crate provides the lattice, the long-range kernel and the discrete
//! fractional Laplacian, the energy functional and its derivative, fibering
//! projections onto the Nehari manifold and the sign-changing Nehari set,
//! and a projected descent solver for ground states and sign-changing
//! solutions.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod field;
pub mod lattice;
pub mod nehari;
pub mod operator;
pub mod solver;

pub use energy::{ModelParams, Problem};
pub use error::{Error, Result};
pub use field::Field;
pub use lattice::{ExecPolicy, Kernel, LatticeDomain, Potential};
