//! Numerical self-checks run by the `response` subcommand and the
//! acceptance suite.

use mks_core::density_matrix::{directional_derivative, free_energy_gradient, DensityMatrix};
use mks_core::linalg::{frobenius, orthonormality_error};
use mks_core::response::{A4Report, ResponseContext, TangentPerturbation};
use mks_core::scf::{fixed_point_map, occupation_operator_in_frame, ScfProblem, ScfState};
use mks_core::smearing::{occupations, solve_mu, Smearing};
use mks_core::C64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;

/// Step of the centred differences of `χ`.
pub const CHI_STEP: f64 = 1e-5;
/// Step of the centred differences of `F`.
pub const GRADIENT_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(m, m, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// `|Σ f_i - N| / N` and the orthonormality defect of a converged state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub relative_trace_error: f64,
    pub orthonormality: f64,
    pub residual_fixedpoint: f64,
}

pub fn constraints(problem: &ScfProblem, state: &ScfState) -> ConstraintReport {
    let sum: f64 = state.gamma.occupations().iter().sum();
    ConstraintReport {
        relative_trace_error: (sum - problem.n_electrons).abs() / problem.n_electrons,
        orthonormality: orthonormality_error(state.gamma.orbitals()),
        residual_fixedpoint: state.residual_fixedpoint,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResponseReport {
    /// Largest relative deviation of `χΨ` from centred differences of the
    /// occupation operator.
    pub chi_fd_error: f64,
    /// Largest `‖𝒥(sol) - rhs‖` over random right-hand sides.
    pub roundtrip_residual: f64,
    /// Largest `⟨χΨ, Ψ⟩` over the samples.
    pub max_pairing: f64,
    pub samples: usize,
    pub a4: A4Summary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct A4Summary {
    pub lambda_min: f64,
    pub kappa: f64,
    pub denominator_s: f64,
    pub g_sign: &'static str,
    pub tangent_dim: usize,
}

impl From<A4Report> for A4Summary {
    fn from(r: A4Report) -> Self {
        Self {
            lambda_min: r.lambda_min,
            kappa: r.kappa,
            denominator_s: r.denominator_s,
            g_sign: r.g_sign.as_str(),
            tangent_dim: r.tangent_dim,
        }
    }
}

/// Finite-difference, round-trip and sign checks of the response operators
/// on `samples` random Hermitian tangents.
pub fn response_check(ctx: &ResponseContext, seed: u64, samples: usize) -> Result<ResponseReport> {
    let mut rng = rng(seed);
    let m = ctx.len();
    let problem = ctx.problem();
    let solver = ctx.jacobian_solver()?;
    let mut chi_fd_error: f64 = 0.0;
    let mut roundtrip: f64 = 0.0;
    let mut max_pairing = f64::NEG_INFINITY;
    for _ in 0..samples {
        let psi = random_hermitian(&mut rng, m);
        let chi = ctx.apply_chi(&psi)?;
        let drho = ctx.tangent_density(&psi).scale(CHI_STEP);
        let plus = ctx.rho_bar().add(&drho)?;
        let minus = ctx.rho_bar().sub(&drho)?;
        let fp = occupation_operator_in_frame(problem, &plus, ctx.mu(), ctx.orbitals())?;
        let fm = occupation_operator_in_frame(problem, &minus, ctx.mu(), ctx.orbitals())?;
        let fd = (fp - fm) / C64::new(2.0 * CHI_STEP, 0.0);
        let scale = frobenius(&fd).max(frobenius(&chi)).max(f64::MIN_POSITIVE);
        chi_fd_error = chi_fd_error.max(frobenius(&(&chi - &fd)) / scale);

        max_pairing = max_pairing.max(ctx.chi_pairing(&psi)?);

        let rhs = TangentPerturbation::new(random_hermitian(&mut rng, m), rng.random_range(-1.0..1.0));
        let sol = solver.solve(&rhs)?;
        let back = ctx.apply_jacobian(&sol)?;
        roundtrip = roundtrip.max(frobenius(&(back.psi - &rhs.psi)) + (back.s - rhs.s).abs());
    }
    Ok(ResponseReport {
        chi_fd_error,
        roundtrip_residual: roundtrip,
        max_pairing,
        samples,
        a4: ctx.audit_a4().into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradientSample {
    pub analytic: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

/// Directional derivatives of `F` against centred differences along
/// trace-free Hermitian tangents. The test point is off the minimiser:
/// orbitals of `H(ρ_uniform)` carrying broad fractional occupations (all
/// well inside `(0, 1)`, which keeps the entropy curvature moderate) with
/// `Σ f_i = N`, so that the derivatives are not zero.
pub fn gradient_check(problem: &ScfProblem, seed: u64, count: usize) -> Result<Vec<GradientSample>> {
    let out = fixed_point_map(problem, &problem.uniform_density())?;
    let n = problem.n_electrons;
    let m = (2.0 * n.ceil() + 2.0) as usize;
    let m = m.min(out.gamma.len());
    let ladder: Vec<f64> = (0..m).map(|i| i as f64).collect();
    let smooth = Smearing::new(0.5)?;
    let occ = occupations(&ladder, solve_mu(&ladder, n, smooth)?, smooth);
    let gamma = DensityMatrix::new(
        problem.basis.clone(),
        out.gamma.orbitals().columns(0, m).into_owned(),
        occ,
    )?;
    let grad = free_energy_gradient(&gamma, &problem.vext, &problem.interactions, problem.smearing)?;
    let mut rng = rng(seed);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut psi = random_hermitian(&mut rng, m);
        let tr = psi.trace() / C64::new(m as f64, 0.0);
        for i in 0..m {
            psi[(i, i)] -= tr;
        }
        let plus = problem.free_energy(&gamma.perturbed(&psi, GRADIENT_STEP)?)?.total;
        let minus = problem.free_energy(&gamma.perturbed(&psi, -GRADIENT_STEP)?)?.total;
        let fd = (plus - minus) / (2.0 * GRADIENT_STEP);
        let analytic = directional_derivative(&grad, &psi);
        samples.push(GradientSample {
            analytic,
            finite_difference: fd,
            relative_error: (fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE),
        });
    }
    Ok(samples)
}
