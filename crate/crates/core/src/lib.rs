//! Simulation toolkit for pulsed dynamical nuclear polarization through
//! nitrogen-vacancy centers with surface-electron mediators.
//!
//! The crate covers three layers:
//! * density-matrix simulations of the double-channel PulsePol protocol on a
//!   small NV / electron / nuclei register, unitary or with Lindblad
//!   decoherence ([`spin`], [`physics`], [`pulse`], [`dynamics`]);
//! * closed-form transfer and cooling-rate models ([`analytics`]);
//! * a continuum convection-diffusion solver producing hyperpolarization maps
//!   and polarized-spin counts over the sample half-space ([`continuum`]).
//!
//! Unit conventions: internal frequencies are angular (rad/us), user-facing
//! frequencies are linear MHz with an explicit 2 pi factor at the boundary;
//! lengths are nm, magnetic fields Gauss, discrete times us, continuum times s.

pub mod analytics;
pub mod continuum;
pub mod dynamics;
pub mod error;
pub mod physics;
pub mod pulse;
pub mod scenario;
pub mod spin;

pub use error::{Error, Result};
