//! Simulation and verification engine for quantum dynamical semigroups on
//! lattice UHF algebras and their Evans-Hudson dilations.
//!
//! The crate is organised bottom-up:
//!
//! * [`weyl`] exact symbolic algebra of local observables written in the
//!   clock/shift (generalised Pauli) string basis `U_g`.
//! * [`dense`] brute-force matrix realisations on finite site windows; the
//!   independent oracle used to cross-check everything symbolic.
//! * [`lindblad`] translation-covariant Lindblad generators built from Kraus
//!   families, partial-state semigroups, their ergodic states and the
//!   derivation identities and bounds behind the dilation.
//! * [`fock`] matrix elements of the Evans-Hudson flow between exponential
//!   vectors, solved as linear ODE systems on a truncated operator basis.
//! * [`ode`] the small piecewise-constant linear ODE toolkit both of the
//!   above rely on.

pub mod dense;
pub mod error;
pub mod fock;
pub mod lindblad;
pub mod ode;
pub mod weyl;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
