//! End-to-end acceptance checks on the shipped benchmark configurations.
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use mks_core::cell_basis::{to_grid, PlaneWaveBasis};
use mks_core::density_matrix::s11_distance;
use mks_core::linalg::{frobenius, hermitian_eigen};
use mks_core::potentials::DIRAC_COEFFICIENT;
use mks_core::response::{ResponseContext, TangentPerturbation};
use mks_core::scf::{lowest_eigenpairs, run_scf, EigensolverKind, Hamiltonian};
use mks_core::C64;
use mks_harness::checks::{constraints, gradient_check, random_hermitian, response_check, rng};
use mks_harness::cli::run;
use mks_harness::quasi::{dense_s11_norm, quasi_optimality_at};
use mks_harness::sweep::{run_sweep_at, solve_at};
use mks_harness::RunConfig;
use nalgebra::DMatrix;
use rand::Rng;

const BENCHMARKS: [&str; 4] = ["free1d", "si1d", "rhf1d", "tiny3d"];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn converged_context(cfg: &RunConfig, cutoff: f64) -> ResponseContext {
    let solved = solve_at(cfg, cfg.basis(cutoff, None).unwrap(), cfg.beta, cfg.scf).unwrap();
    ResponseContext::new(&solved.problem, &solved.state, cfg.g_sign, cfg.response_tol).unwrap()
}

fn free_electron_exactness() -> Outcome {
    let cfg = config("free1d");
    let problem = cfg.problem().unwrap();
    let state = run_scf(&problem).unwrap();
    let mut free: Vec<f64> = problem.basis.g_vectors().iter().map(|g| 0.5 * g.norm2).collect();
    free.sort_by(f64::total_cmp);
    let eig = state.gamma.eigenvalues().unwrap();
    let eig_err = eig.iter().zip(&free).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (f_exact, _) = smeared_free_energy(&free, cfg.n_electrons, cfg.beta);
    let f_err = (state.free_energy.total - f_exact).abs();
    outcome(
        eig_err <= 1e-10 && state.iterations <= 2 && state.converged && f_err <= 1e-10,
        format!(
            "max|eps - |G|^2/2| = {eig_err:.1e}, {} iterations, |F - F_exact| = {f_err:.1e}",
            state.iterations
        ),
    )
}

fn constraint_satisfaction() -> Outcome {
    let mut worst_trace: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    let mut all_converged = true;
    for name in BENCHMARKS {
        let cfg = config(name);
        for &beta in &cfg.temperatures {
            let problem = cfg.problem_on(cfg.basis(cfg.cutoff, None).unwrap(), beta, cfg.scf).unwrap();
            let state = run_scf(&problem).unwrap();
            all_converged &= state.converged;
            let k = constraints(&problem, &state);
            worst_trace = worst_trace.max(k.relative_trace_error);
            worst_orth = worst_orth.max(k.orthonormality);
        }
    }
    outcome(
        all_converged && worst_trace <= 1e-12 && worst_orth <= 1e-10,
        format!("4 benchmarks x 3 temperatures: max |sum f - N|/N = {worst_trace:.1e}, max orthonormality defect = {worst_orth:.1e}"),
    )
}

fn first_order_optimality() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    for name in BENCHMARKS {
        let cfg = config(name);
        let state = run_scf(&cfg.problem().unwrap()).unwrap();
        all_converged &= state.converged;
        worst = worst.max(state.residual_fixedpoint);
    }
    outcome(
        all_converged && worst <= 1e-8,
        format!("max ||f_mu(H(rho)) - Gamma|| over benchmarks = {worst:.1e}"),
    )
}

fn gradient_finite_differences() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut smallest = f64::INFINITY;
    for name in ["si1d", "rhf1d"] {
        let cfg = config(name);
        let samples = gradient_check(&cfg.problem().unwrap(), cfg.seed, 10).unwrap();
        for s in samples {
            worst = worst.max(s.relative_error);
            smallest = smallest.min(s.analytic.abs());
        }
    }
    outcome(
        worst < 1e-5,
        format!("20 tangents on si1d and rhf1d: max relative error {worst:.1e} (smallest |dF| {smallest:.1e})"),
    )
}

fn response_correctness() -> Outcome {
    let si = config("si1d");
    let rhf = config("rhf1d");
    let a = response_check(&converged_context(&si, si.cutoff), si.seed, 5).unwrap();
    let b = response_check(&converged_context(&rhf, rhf.cutoff), rhf.seed, 20).unwrap();
    let fd = a.chi_fd_error.max(b.chi_fd_error);
    let rt = a.roundtrip_residual.max(b.roundtrip_residual);
    outcome(
        fd < 1e-5 && rt < 1e-8 && b.max_pairing <= 1e-10,
        format!(
            "chi vs finite differences {fd:.1e}, Jacobian round trip {rt:.1e}, xc-off max <chi psi, psi> = {:.2e}",
            b.max_pairing
        ),
    )
}

/// λ_min recorded after the first validated run.
const A4_FIXTURES: [(&str, f64); 2] = [("rhf1d", 1.0), ("si1d", 0.999110)];

fn a4_audit() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, fixture) in A4_FIXTURES {
        let cfg = config(name);
        let r = converged_context(&cfg, cfg.cutoff).audit_a4();
        let doubled = converged_context(&cfg, 2.0 * cfg.cutoff).audit_a4();
        let stable = (r.lambda_min - doubled.lambda_min).abs() <= 0.2 * doubled.lambda_min;
        let matches = (r.lambda_min - fixture).abs() <= 1e-5;
        ok &= r.lambda_min > 0.0 && r.kappa.is_finite() && stable && matches;
        detail.push(format!(
            "{name}: lambda_min {:.6} (at 2Ec {:.6}), kappa {:.6}",
            r.lambda_min, doubled.lambda_min, r.kappa
        ));
    }
    outcome(ok, detail.join("; "))
}

fn convergence_experiment() -> Outcome {
    let cfg = config("si1d");
    let mut ok = cfg.cutoffs.len() >= 5 && cfg.temperatures.len() >= 3;
    let mut detail = Vec::new();
    for &beta in &cfg.temperatures {
        let r = run_sweep_at(&cfg, beta).unwrap();
        let (e, d) = (r.energy_fit.unwrap(), r.density_fit.unwrap());
        let mono = r.monotonicity();
        ok &= e.exponential.r2 >= 0.95
            && d.exponential.r2 >= 0.95
            && e.exponential.slope < 0.0
            && d.exponential.slope < 0.0
            && mono.is_clean();
        detail.push(format!(
            "beta {beta}: R2(F) {:.4}, R2(rho) {:.4}, monotone {}",
            e.exponential.r2,
            d.exponential.r2,
            mono.is_clean()
        ));
    }
    outcome(ok, detail.join("; "))
}

fn quasi_optimality() -> Outcome {
    let cfg = config("si1d");
    let mut ok = true;
    let mut detail = Vec::new();
    for &beta in &cfg.temperatures {
        let r = quasi_optimality_at(&cfg, beta).unwrap();
        let small = r.rows.iter().all(|row| row.basis_size <= 200);
        ok &= small && r.bounded && r.non_increasing && r.max_ratio <= 50.0 && r.orbital_constant.is_finite();
        detail.push(format!(
            "beta {beta}: max ratio {:.4}, trend {:.1e}, orbital constant {:.4}",
            r.max_ratio, r.trend_slope, r.orbital_constant
        ));
    }
    outcome(ok, detail.join("; "))
}

/// `ℒ` by a naive DFT of the orbital pair products and the closed-form
/// Dirac kernel.
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
    let pairs: Vec<Vec<C64>> = (0..m * m)
        .map(|r| (0..n).map(|x| phi[r / m][x] * phi[r % m][x].conj()).collect())
        .collect();
    let hats: Vec<Vec<C64>> = pairs
        .iter()
        .map(|p| {
            freqs
                .iter()
                .map(|g| (0..n).map(|x| p[x] * C64::from_polar(1.0, -g * xs[x])).sum::<C64>() * w / vol.sqrt())
                .collect()
        })
        .collect();
    let kxc: Vec<f64> = ctx
        .rho_bar()
        .real_values()
        .iter()
        .map(|t| -4.0 / 9.0 * DIRAC_COEFFICIENT * t.max(1e-12).powf(-2.0 / 3.0))
        .collect();
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

/// `H_{GG'} = ½|G|² δ + |Ω|⁻¹ Σ_x w v(x) e^{-i(G-G')·x}` by direct summation.
fn hamiltonian_oracle(h: &Hamiltonian) -> DMatrix<C64> {
    let b = h.basis();
    let v = h.v_local().real_values();
    let pts: Vec<[f64; 3]> = (0..b.grid_len()).map(|j| b.grid_point(j)).collect();
    let g = b.g_vectors();
    let vol = b.cell().volume();
    let w = b.grid_weight();
    DMatrix::from_fn(b.len(), b.len(), |i, j| {
        let d = [0, 1, 2].map(|k| g[i].cartesian[k] - g[j].cartesian[k]);
        let mut s: C64 = pts
            .iter()
            .zip(&v)
            .map(|(x, vx)| C64::from_polar(vx * w, -(d[0] * x[0] + d[1] * x[1] + d[2] * x[2])))
            .sum::<C64>()
            / vol;
        if i == j {
            s += 0.5 * g[i].norm2;
        }
        s
    })
}

fn oracle_equivalence() -> Outcome {
    let mut worst: [f64; 4] = [0.0; 4];
    let mut sizes = Vec::new();
    // Hamiltonian assembly and eigensolves: 1D and 3D bases of at most 32 plane waves
    for (name, cutoff) in [("si1d", 45.0), ("tiny3d", 1.6)] {
        let cfg = config(name);
        let problem = cfg.problem_on(cfg.basis(cutoff, None).unwrap(), cfg.beta, cfg.scf).unwrap();
        let n = problem.basis.len();
        sizes.push(n);
        assert!(n <= 32);
        let state = run_scf(&problem).unwrap();
        let h = problem.hamiltonian(&state.rho).unwrap();
        let oracle = hamiltonian_oracle(&h);
        let scale = frobenius(&oracle);
        worst[0] = worst[0].max(frobenius(&(h.dense_matrix() - &oracle)) / scale);
        let applied = DMatrix::from_fn(n, n, |i, j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            h.apply(&e)[i]
        });
        worst[0] = worst[0].max(frobenius(&(applied - &oracle)) / scale);
        let (exact, _) = hermitian_eigen(&oracle);
        let m = 4.min(n / 4);
        for kind in [EigensolverKind::Dense, EigensolverKind::Lobpcg] {
            let pairs = lowest_eigenpairs(&h, m, kind).unwrap();
            for (a, b) in pairs.values.iter().zip(&exact) {
                worst[1] = worst[1].max((a - b).abs());
            }
        }
        // 𝔖¹,¹ norms of the state and of its distance to a coarser one
        let gamma = state.gamma.to_operator();
        worst[2] = worst[2].max((gamma.s11_norm() - dense_s11_norm(&gamma.dense(), &problem.basis)).abs());
        let coarse_basis =
            Arc::new(PlaneWaveBasis::build(problem.basis.cell(), 0.6 * cutoff, Some(problem.basis.fft_grid())).unwrap());
        let coarse = run_scf(&cfg.problem_on(coarse_basis, cfg.beta, cfg.scf).unwrap()).unwrap();
        let embedded = coarse.gamma.to_operator().embed(&problem.basis).unwrap();
        let low_rank = s11_distance(&embedded, &gamma).unwrap();
        let dense = dense_s11_norm(&(embedded.dense() - gamma.dense()), &problem.basis);
        worst[2] = worst[2].max((low_rank - dense).abs());
    }
    // Jacobian assembly
    let cfg = config("si1d");
    let ctx = converged_context(&cfg, 20.0);
    sizes.push(ctx.problem().basis.len());
    let oracle = kernel_oracle(&ctx);
    worst[3] = frobenius(&(ctx.kernel_matrix() - &oracle)) / frobenius(&oracle);
    let m = ctx.len();
    let d = ctx.divided_differences();
    let g = ctx.g_matrix();
    let mut rng = rng(cfg.seed);
    for _ in 0..5 {
        let psi = random_hermitian(&mut rng, m);
        let s: f64 = rng.random_range(-1.0..1.0);
        let v = DMatrix::from_fn(m * m, 1, |r, _| psi[(r / m, r % m)]);
        let lv = &oracle * v;
        let expected = DMatrix::from_fn(m, m, |i, j| d[(i, j)] * lv[i * m + j] - psi[(i, j)] + g[(i, j)] * s);
        let got = ctx.apply_jacobian(&TangentPerturbation::new(psi.clone(), s)).unwrap();
        worst[3] = worst[3].max(frobenius(&(got.psi - &expected)) / frobenius(&expected));
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    outcome(
        max <= 1e-8 && sizes.iter().all(|&n| n <= 32),
        format!(
            "bases {sizes:?}: Hamiltonian {:.1e}, eigenvalues {:.1e}, S11 norms {:.1e}, Jacobian {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("si1d.cfg");
    let text = config_text("si1d").replace("[output]", "[output]\nwall_clock = false");
    std::fs::write(&cfg_path, text).unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let mut dirs = Vec::new();
    for k in 0..2 {
        let dir = tmp.path().join(format!("run{k}"));
        let out = dir.to_str().unwrap();
        let mut sink = Vec::new();
        let mut err = Vec::new();
        for sub in ["sweep", "quasi-opt", "scf"] {
            let code = run(["mks", sub, "--config", cfg, "--out", out], &mut sink, &mut err);
            assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
        }
        dirs.push(dir);
    }
    let files = ["sweep.csv", "quasi_opt.csv", "scf_log.csv", "summary.json", "checkpoint.json"];
    let identical: Vec<bool> = files.iter().map(|f| read(&dirs[0], f) == read(&dirs[1], f)).collect();
    // with timing on, everything except the wall-clock column still matches
    let timed = run_sweep_at(&config("si1d"), 100.0).unwrap().rows();
    let again = run_sweep_at(&config("si1d"), 100.0).unwrap().rows();
    let errors_match = timed.iter().zip(&again).all(|(a, b)| {
        [a.ec, a.f_total, a.f_err, a.rho_l2_err, a.gamma_s11_err, a.proj_err, a.ratio]
            .iter()
            .zip([b.ec, b.f_total, b.f_err, b.rho_l2_err, b.gamma_s11_err, b.proj_err, b.ratio])
            .all(|(x, y)| x.to_bits() == y.to_bits())
            && a.scf_iters == b.scf_iters
    });
    outcome(
        identical.iter().all(|&x| x) && errors_match,
        format!(
            "two runs, byte-identical: {}; timed error columns bitwise equal: {errors_match}",
            files
                .iter()
                .zip(&identical)
                .map(|(f, same)| format!("{f}={same}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

/// Name, time budget in seconds, check.
type Criterion = (&'static str, f64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("free-electron exactness", 1.0, free_electron_exactness),
        ("constraint satisfaction", 10.0, constraint_satisfaction),
        ("first-order optimality", 10.0, first_order_optimality),
        ("free-energy gradient", 30.0, gradient_finite_differences),
        ("response correctness", 60.0, response_correctness),
        ("A4 audit", 60.0, a4_audit),
        ("convergence experiment", 300.0, convergence_experiment),
        ("quasi-optimality", 300.0, quasi_optimality),
        ("oracle equivalence", 60.0, oracle_equivalence),
        ("determinism", 120.0, determinism),
    ];
    let mut failures = 0;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check);
        let secs = start.elapsed().as_secs_f64();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && secs < *budget, o.detail),
            Err(_) => (false, "panicked".to_string()),
        };
        failures += usize::from(!passed);
        println!(
            "criterion {:>2} {:<26} {}  ({detail}; {secs:.2}s of {budget}s)",
            k + 1,
            name,
            if passed { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
