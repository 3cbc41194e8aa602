//! Shortcut-to-adiabaticity pulses for ensemble Lambda-system qubits.
//!
//! Pulses are built by inverse engineering a Lewis-Riesenfeld invariant of
//! the three-level Lambda system ([`invariant`]), then checked on a six-level
//! open-system model of an inhomogeneously broadened ion ensemble
//! ([`levels`], [`dynamics`]). The remaining modules optimize the free
//! coefficients, simulate consecutive-transfer and tomography experiments and
//! analyse synthetic absorption spectra.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod invariant;
pub mod levels;
pub mod manifest;
pub mod ode;
pub mod optimizer;
pub mod protocol;
pub mod pulse_file;
pub mod spectra;
pub mod tomography;

pub use error::{Error, Result};
