//! Discrete-state numerics for a finite tight-binding dot coupled to
//! semi-infinite single-channel leads.
//!
//! The crate finds all `2N` discrete eigenstates (bound, anti-bound, resonant,
//! anti-resonant) of an `N`-site dot from a linearized quadratic eigenvalue
//! problem, expands Green's functions over them without continuum integrals,
//! and evaluates time evolution by band quadrature, by pole/branch
//! decomposition, and by per-state wave-packet components. A brute-force
//! truncated lattice is provided as an independent oracle.
//!
//! Units: lead hopping `t_lead = 1`, lattice constant 1, `hbar = 1`.
//! Energies and the lead eigenvalue `lambda = e^{ik}` are related by
//! `E = -lambda - 1/lambda`.
//!
//! The crate is `no_std` (with `alloc`). The default `std` feature only
//! switches the math backend from `libm` to the platform library.
#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod contour;
pub mod error;
pub mod greens;
pub mod model;
pub mod oracle;
pub mod pencil;
pub mod quad;
pub mod spectral;
pub mod time;

pub use error::{Error, Result};
pub use model::{LeadAttachment, ModelDescription, OpenLatticeModel, Sheet, SheetPoint};
pub use spectral::{DiscreteState, SpectralSolution, StateClass};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex vector.
pub type CVector = nalgebra::DVector<C64>;

/// Dense real matrix.
pub type RMatrix = nalgebra::DMatrix<f64>;
