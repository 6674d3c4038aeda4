//! Gauge-invariant magnetic helicity on multiply connected voxel domains.
//!
//! The crate builds voxel cell complexes with exact discrete grad/curl/div
//! operators, canonical multiply connected domains with their cycles and
//! cutting surfaces, discrete harmonic field bases, vector potentials, the
//! generalized helicity functional and its dissipation/conservation
//! diagnostics under resistive MHD evolution, and Woltjer constrained
//! relaxation to linear force-free fields.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod harmonic;
pub mod helicity;
pub mod mhd;
pub(crate) mod ops;
pub mod potential;
pub mod relax;
pub mod solver;

pub use error::{HelioxError, Result};
pub use grid::{Axis, CellComplex, Degree, Field, GridSpec};
