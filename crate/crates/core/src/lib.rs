//! Numerical laboratory for the radial focusing cubic NLS in three dimensions,
//!
//! ```text
//! (i∂_t + Δ) u = -|u|² u,   u(0) = u₀ radial.
//! ```
//!
//! The crate computes the ground state Q and its variational constants,
//! evolves radial data with a Strang-split sine-spectral scheme, and measures
//! the virial/Morawetz quantities and threshold diagnostics used to separate
//! scattering from blowup.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod evolve;
pub mod exec;
pub mod families;
pub mod grid;
pub mod ground_state;
pub mod morawetz;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{make_grid, RadialField, RadialGrid, SpectralCoeffs};

pub use num_complex::Complex64;
pub use ground_state::{constants, find_ground_state, gn_ratio, GroundState, VariationalConstants};
