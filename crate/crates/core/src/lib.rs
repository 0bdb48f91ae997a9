//! Fiber spectra, dispersion relations, localisation and finite-time
//! scattering of exchange-bound fermion pairs on the square lattice.
//!
//! The model is handled fiber by fiber: at fixed total quasi-momentum `k`
//! the Hamiltonian acts on functions of the relative momentum (discretised
//! on a [`grid::TorusGrid`]) plus a single bosonic amplitude.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod dispersion;
pub mod error;
pub mod expm;
pub mod fiber;
pub mod grid;
pub mod io;
pub mod params;
pub mod scattering;
pub mod spectral;

pub use error::{Error, Result};

/// Point of the torus [-pi, pi)^2.
pub type TorusPoint = [f64; 2];
