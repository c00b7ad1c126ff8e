//! Kinetic theory of energy transport in weakly anharmonic lattices.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: elastic constants, dispersion relation and the Brillouin-zone grid.
//! - [`equilibrium`]: Bose-Einstein and classical occupations, current weights.
//! - [`collision`]: three- and four-phonon linearized collision operators on the grid.
//! - [`transport`]: current correlations, Green-Kubo conductivity, relaxation-time approximation.
//! - [`fluctuation`]: the Langevin equation for equilibrium phonon-number fluctuations.
//! - [`microdyn`]: classical molecular dynamics of the microscopic Hamiltonian.
//!
//! Units are ħ = k_B = 1 and unit atomic mass throughout.

pub mod cache;
pub mod collision;
pub mod equilibrium;
pub mod error;
pub mod fluctuation;
pub mod lattice;
pub mod linalg;
pub mod microdyn;
pub mod transport;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
