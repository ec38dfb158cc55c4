#![allow(dead_code)]

use std::sync::Arc;

use mks_core::cell_basis::{build_basis, Cell, PlaneWaveBasis};
use mks_core::potentials::{
    ExternalPotential, GaussianWell, Interactions, XcFunctional, DIRAC_COEFFICIENT,
};
use mks_core::scf::{Mixing, ScfOptions, ScfProblem};
use mks_core::smearing::Smearing;
use mks_core::C64;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn basis_1d(len: f64, ec: f64) -> Arc<PlaneWaveBasis> {
    Arc::new(build_basis(&Cell::cubic(1, len).unwrap(), ec).unwrap())
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(m, m, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn wells() -> ExternalPotential {
    ExternalPotential::GaussianWells(vec![
        GaussianWell { center: [1.7, 0.0, 0.0], depth: 3.0, width: 0.6 },
        GaussianWell { center: [5.1, 0.0, 0.0], depth: 2.5, width: 0.65 },
        GaussianWell { center: [8.0, 0.0, 0.0], depth: 3.5, width: 0.55 },
    ])
}

pub fn interacting() -> Interactions {
    Interactions {
        hartree: true,
        xc: Some(XcFunctional::dirac(DIRAC_COEFFICIENT)),
    }
}

pub fn rhf() -> Interactions {
    Interactions { hartree: true, xc: None }
}

pub fn tight_options() -> ScfOptions {
    ScfOptions {
        mixing: Mixing::Anderson { alpha: 0.5, window: 5 },
        tol_rho: 1e-11,
        tol_f: 1e-12,
        ..Default::default()
    }
}

/// Three asymmetric Gaussian wells in a 10 bohr cell with three electrons.
pub fn chain(ec: f64, beta: f64, interactions: Interactions) -> ScfProblem {
    ScfProblem::new(
        basis_1d(10.0, ec),
        3.0,
        Smearing::new(beta).unwrap(),
        &wells(),
        interactions,
        tight_options(),
    )
    .unwrap()
}
