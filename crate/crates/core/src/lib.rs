//! Periodic plane-wave solver for the finite-temperature Kohn-Sham problem
//! written over one-electron density matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`cell_basis`]: cells, plane-wave basis sets under an energy cutoff,
//!   FFT transforms and the Fourier truncation projector.
//! * [`potentials`]: external potentials, the periodic Hartree solve and
//!   LDA-type exchange-correlation functionals.
//! * [`smearing`]: Fermi-Dirac occupations, entropy and the chemical
//!   potential solve.
//! * [`density_matrix`]: density matrices in spectral form, densities, the
//!   `S^{1,1}` norm, the free energy and Galerkin projections.
//! * [`scf`]: Hamiltonian application, eigensolvers, the fixed-point map and
//!   the SCF driver.
//! * [`response`]: the linear response operator, the Jacobian of the
//!   optimality map and its block solve, and the stability audit.

pub mod cell_basis;
pub mod density_matrix;
pub mod error;
pub mod linalg;
pub mod potentials;
pub mod response;
pub mod scf;
pub mod smearing;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Complex scalar used for plane-wave coefficients.
pub type C64 = Complex64;
