//! Guided Bloch modes of W1 photonic-crystal waveguides and the chiral
//! coupling of spin-selective dipoles to them.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod fields;
pub mod modesolver;
pub mod pipeline;
pub mod lightmatter;
pub mod polarization;
pub mod quantum;
pub mod scattering;

pub use error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
