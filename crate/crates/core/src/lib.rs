//! Numerical laboratory for a pair of linearly coupled χ(2) waveguides
//! sharing a pumped optical cavity.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the normalized parameters, the symmetric steady states
//!   and the coupling-constant utilities.
//! * [`stability`] linearizes around a steady state and classifies it.
//! * [`spectra`] evaluates linearized photon-number correlation spectra.
//! * [`sim`] integrates the truncated-Wigner Langevin equations and estimates
//!   the same spectra from simulated output fields.

pub mod error;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod spectra;
pub mod stability;

pub use error::{Error, Result};
pub use model::{Branch, DimerParams, EffectiveDetunings, SymmetricSteadyState};
pub use num_complex::Complex64;
