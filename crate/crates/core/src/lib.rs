//! Nonlinear reservoir engineering (NLRE) of bosonic cat-state manifolds.
//!
//! The crate is organised bottom-up: [`fock`] provides the truncated Fock
//! space algebra, [`rabi`] the scalar Rabi-frequency profiles that define a
//! scheme, [`darkstate`] the analytic dark-state manifold, [`liouvillian`] and
//! [`dynamics`] the master-equation side, and the remaining modules the
//! trapped-ion, circuit-QED, squeezing and phase-space layers.

pub mod cqed;
pub mod darkstate;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod ion;
pub mod linalg;
pub mod liouvillian;
pub mod phasespace;
pub mod rabi;
pub mod sparse;
pub mod special;
pub mod transforms;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector, C64};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
