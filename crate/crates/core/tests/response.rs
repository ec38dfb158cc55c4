mod common;

use std::f64::consts::PI;

use common::*;
use mks_core::cell_basis::*;
use mks_core::linalg::{frobenius, hermiticity_error};
use mks_core::potentials::{xc_kernel, Interactions, DIRAC_COEFFICIENT};
use mks_core::response::*;
use mks_core::scf::*;
use mks_core::smearing::GSign;
use mks_core::{Error, C64};
use nalgebra::DMatrix;
use rand::Rng;

fn context(problem: &ScfProblem, sign: GSign) -> ResponseContext {
    let state = run_scf(problem).unwrap();
    assert!(state.converged);
    ResponseContext::new(problem, &state, sign, 1e-8).unwrap()
}

fn small_chain(ec: f64, beta: f64, interactions: Interactions, buffer: usize) -> ScfProblem {
    chain(ec, beta, interactions)
        .with_options(ScfOptions { buffer, ..tight_options() })
        .unwrap()
}

fn rel(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    frobenius(&(a - b)) / frobenius(b).max(1e-300)
}

#[test]
fn noninteracting_response_vanishes() {
    let p = small_chain(10.0, 10.0, Interactions::none(), 4);
    let ctx = context(&p, GSign::Paper);
    let mut rng = rng(50);
    let psi = random_hermitian(&mut rng, ctx.len());
    assert!(frobenius(&ctx.apply_chi(&psi).unwrap()) == 0.0);
    let report = ctx.audit_a4();
    assert!((report.lambda_min - 1.0).abs() < 1e-14 && (report.kappa - 1.0).abs() < 1e-14);

    // Ψ = 0, s = 1 → (g, 0); s = 0 → (-Ψ, Tr Ψ)
    let zero = DMatrix::zeros(ctx.len(), ctx.len());
    let j = ctx.apply_jacobian(&TangentPerturbation::new(zero, 1.0)).unwrap();
    assert!(frobenius(&(j.psi - ctx.g_matrix())) == 0.0 && j.s == 0.0);
    let j = ctx.apply_jacobian(&TangentPerturbation::new(psi.clone(), 0.0)).unwrap();
    assert!(frobenius(&(j.psi + &psi)) < 1e-15);
    assert!((j.s - psi.trace().re).abs() < 1e-15);

    // closed form with χ = 0
    let phi = random_hermitian(&mut rng, ctx.len());
    let t = 0.3;
    let g = ctx.g_matrix();
    let s = (-phi.trace().re - t) / (-g.trace().re);
    let expected = -(&phi - &g * C64::new(s, 0.0));
    let sol = ctx.solve_jacobian(&TangentPerturbation::new(phi, t)).unwrap();
    assert!((sol.s - s).abs() < 1e-10 * s.abs().max(1.0));
    assert!(rel(&sol.psi, &expected) < 1e-10);
}

#[test]
fn chi_matches_perturbed_hamiltonian_differences() {
    for (inter, beta) in [(interacting(), 20.0), (rhf(), 50.0)] {
        let p = small_chain(12.0, beta, inter, 4);
        let ctx = context(&p, GSign::Paper);
        let mut rng = rng(51);
        let eps = 1e-5;
        for _ in 0..3 {
            let psi = random_hermitian(&mut rng, ctx.len());
            let chi = ctx.apply_chi(&psi).unwrap();
            let drho = ctx.tangent_density(&psi);
            let plus = ctx.rho_bar().add(&drho.scale(eps)).unwrap();
            let minus = ctx.rho_bar().sub(&drho.scale(eps)).unwrap();
            let fp = occupation_operator_in_frame(&p, &plus, ctx.mu(), ctx.orbitals()).unwrap();
            let fm = occupation_operator_in_frame(&p, &minus, ctx.mu(), ctx.orbitals()).unwrap();
            let fd = (fp - fm) / C64::new(2.0 * eps, 0.0);
            assert!(rel(&chi, &fd) < 1e-5, "{}", rel(&chi, &fd));
        }
    }
}

/// `ℒ` assembled entry by entry: naive DFT of the pair products for the
/// Hartree part and the closed-form Dirac kernel for exchange.
fn kernel_oracle(ctx: &ResponseContext) -> DMatrix<C64> {
    let b = &ctx.problem().basis;
    let m = ctx.len();
    let n = b.grid_len();
    let w = b.grid_weight();
    let vol = b.cell().volume();
    let phi: Vec<Vec<C64>> = (0..m)
        .map(|i| {
            let c: Vec<C64> = ctx.orbitals().column(i).iter().copied().collect();
            to_grid(b, &c).unwrap().into_values()
        })
        .collect();
    let xs: Vec<f64> = (0..n).map(|j| b.grid_point(j)[0]).collect();
    let nf = b.fft_grid()[0] as i32;
    let freqs: Vec<f64> = (-(nf / 2)..=(nf - 1) / 2)
        .map(|k| b.cell().reciprocal_cartesian([k, 0, 0])[0])
        .collect();
    let pair = |k: usize, l: usize| -> Vec<C64> { (0..n).map(|x| phi[k][x] * phi[l][x].conj()).collect() };
    let hat = |p: &[C64]| -> Vec<C64> {
        freqs
            .iter()
            .map(|g| {
                (0..n).map(|x| p[x] * C64::from_polar(1.0, -g * xs[x])).sum::<C64>() * w / vol.sqrt()
            })
            .collect()
    };
    let rho: Vec<f64> = ctx.rho_bar().real_values();
    let kxc: Vec<f64> = rho.iter().map(|t| -4.0 / 9.0 * DIRAC_COEFFICIENT * t.powf(-2.0 / 3.0)).collect();
    let pairs: Vec<Vec<C64>> = (0..m * m).map(|r| pair(r / m, r % m)).collect();
    let hats: Vec<Vec<C64>> = pairs.iter().map(|p| hat(p)).collect();
    DMatrix::from_fn(m * m, m * m, |r, c| {
        let mut s = C64::new(0.0, 0.0);
        for (k, g) in freqs.iter().enumerate() {
            if *g != 0.0 {
                s += hats[r][k].conj() * hats[c][k] * (4.0 * PI / (g * g));
            }
        }
        for x in 0..n {
            s += pairs[r][x].conj() * pairs[c][x] * kxc[x] * w;
        }
        s
    })
}

#[test]
fn jacobian_matches_dense_assembly() {
    let p = small_chain(8.0, 100.0, interacting(), 3);
    let ctx = context(&p, GSign::Paper);
    let m = ctx.len();
    assert!(m <= 8, "{m}");
    let oracle = kernel_oracle(&ctx);
    let production = ctx.kernel_matrix();
    let scale = frobenius(&oracle);
    assert!(frobenius(&(production - &oracle)) < 1e-10 * scale);
    // xc kernel of the context equals the closed form used above
    let k = xc_kernel(ctx.rho_bar(), p.interactions.xc.as_ref().unwrap()).unwrap();
    assert!(k.iter().all(|x| x.is_finite() && *x < 0.0));

    let d = ctx.divided_differences();
    let g = ctx.g_matrix();
    let mut rng = rng(52);
    for _ in 0..5 {
        let psi = random_hermitian(&mut rng, m);
        let s: f64 = rng.random_range(-1.0..1.0);
        let v = DMatrix::from_fn(m * m, 1, |r, _| psi[(r / m, r % m)]);
        let lv = &oracle * v;
        let expected = DMatrix::from_fn(m, m, |i, j| d[(i, j)] * lv[i * m + j] - psi[(i, j)] + g[(i, j)] * s);
        let got = ctx.apply_jacobian(&TangentPerturbation::new(psi.clone(), s)).unwrap();
        assert!(frobenius(&(got.psi - &expected)) < 1e-10 * frobenius(&expected));
        assert!((got.s - psi.trace().re).abs() < 1e-12);
    }
    // D is symmetric
    assert!((d - d.transpose()).iter().all(|x| x.abs() < 1e-15));
}

#[test]
fn solve_round_trips_under_both_sign_conventions() {
    for sign in [GSign::Paper, GSign::Analytic] {
        for inter in [interacting(), rhf()] {
            let p = small_chain(10.0, 30.0, inter, 4);
            let ctx = context(&p, sign);
            let solver = ctx.jacobian_solver().unwrap();
            let mut rng = rng(53);
            for _ in 0..4 {
                let psi0 = random_hermitian(&mut rng, ctx.len());
                let s0: f64 = rng.random_range(-1.0..1.0);
                let rhs = ctx.apply_jacobian(&TangentPerturbation::new(psi0.clone(), s0)).unwrap();
                let sol = solver.solve(&rhs).unwrap();
                assert!(rel(&sol.psi, &psi0) < 1e-8);
                assert!((sol.s - s0).abs() < 1e-8);
                let back = ctx.apply_jacobian(&sol).unwrap();
                let res = frobenius(&(back.psi - &rhs.psi)) + (back.s - rhs.s).abs();
                assert!(res < 1e-8, "{res}");
            }
            let unit = ctx
                .solve_jacobian(&TangentPerturbation::new(DMatrix::zeros(ctx.len(), ctx.len()), 1.0))
                .unwrap();
            assert!((unit.psi.trace().re - 1.0).abs() < 1e-10);
            assert!(hermiticity_error(&unit.psi) < 1e-12);
        }
    }
}

#[test]
fn reduced_hartree_fock_response_is_nonpositive() {
    let p = small_chain(12.0, 20.0, rhf(), 6);
    let ctx = context(&p, GSign::Paper);
    let mut rng = rng(54);
    for _ in 0..20 {
        let psi = random_hermitian(&mut rng, ctx.len());
        assert!(ctx.chi_pairing(&psi).unwrap() <= 1e-10);
    }
    let report = ctx.audit_a4();
    assert!(report.lambda_min >= 1.0 - 1e-10, "{}", report.lambda_min);
    assert!(report.positive && report.kappa.is_finite());
    assert_eq!(report.tangent_dim, ctx.len() * ctx.len());
}

#[test]
fn chi_is_linear_and_preserves_hermiticity() {
    let p = small_chain(10.0, 40.0, interacting(), 4);
    let ctx = context(&p, GSign::Paper);
    let mut rng = rng(55);
    let a = random_hermitian(&mut rng, ctx.len());
    let b = random_hermitian(&mut rng, ctx.len());
    let ca = ctx.apply_chi(&a).unwrap();
    let cb = ctx.apply_chi(&b).unwrap();
    let cab = ctx.apply_chi(&(&a * C64::new(2.0, 0.0) - &b)).unwrap();
    assert!(frobenius(&(cab - (ca.clone() * C64::new(2.0, 0.0) - cb))) < 1e-10 * frobenius(&ca));
    assert!(hermiticity_error(&ca) < 1e-10);
}

#[test]
fn invalid_inputs_are_rejected() {
    let p = small_chain(10.0, 40.0, interacting(), 4);
    let state = run_scf(&p).unwrap();
    assert!(matches!(
        ResponseContext::new(&p, &state, GSign::Paper, 1e-30),
        Err(Error::NotConverged(_))
    ));
    let ctx = ResponseContext::new(&p, &state, GSign::Paper, 1e-8).unwrap();
    let mut psi = DMatrix::zeros(ctx.len(), ctx.len());
    psi[(0, 1)] = C64::new(1.0, 0.0);
    assert!(matches!(ctx.apply_chi(&psi), Err(Error::NotHermitian(_))));
}

#[test]
fn stability_is_similar_across_doubled_cutoff() {
    let a = context(&small_chain(15.0, 100.0, interacting(), 4), GSign::Paper).audit_a4();
    let b = context(&small_chain(30.0, 100.0, interacting(), 4), GSign::Paper).audit_a4();
    assert!(a.positive && b.positive);
    assert!((a.lambda_min - b.lambda_min).abs() <= 0.2 * b.lambda_min, "{} vs {}", a.lambda_min, b.lambda_min);
}
