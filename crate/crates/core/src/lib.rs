//! Continuous-time quantum walks of one and two photons in planar arrays of
//! evanescently coupled waveguides.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: array geometry, the tridiagonal Hamiltonian and the
//!   edge-perturbed parameterisation used for fabricated devices.
//! - [`evolution`]: exact unitary evolution through a real-symmetric
//!   eigendecomposition, and single-photon output distributions.
//! - [`correlations`]: two-photon coincidence matrices for indistinguishable
//!   and distinguishable photons, the nonclassicality witness and its
//!   count-based significance.
//! - [`metrics`]: similarity between correlation matrices, maximum violation
//!   and sweeps over propagation length.
//! - [`calibration`]: bounded simplex search for the edge-perturbation
//!   parameters that maximise similarity with measured coincidences.
//! - [`io`]: configuration, presets and the CSV formats used by the `qwalk`
//!   command-line tool.
//!
//! Lengths are in μm and propagation/coupling constants in μm⁻¹; the
//! evolution phase is `H·z`. Waveguide labels in public interfaces are
//! 1-indexed.

pub mod calibration;
pub mod correlations;
pub mod error;
pub mod evolution;
pub mod exec;
pub mod io;
pub mod lattice;
pub mod metrics;
mod simplex;

pub use error::{Error, Result};
pub use exec::Execution;
pub use nalgebra;
