mod common;

use common::*;
use mks_harness::config::RunConfig;
use mks_harness::quasi::{dense_s11_norm, quasi_optimality};
use mks_harness::sweep::{run_sweep, run_sweep_at, solve_ladder};
use mks_harness::HarnessError;

#[test]
fn free_electron_sweep_is_exact() {
    let cfg = config("free1d");
    let (reference, swept) = solve_ladder(&cfg, cfg.beta).unwrap();
    for s in swept.iter().chain(std::iter::once(&reference)) {
        let levels: Vec<f64> = s.problem.basis.g_vectors().iter().map(|g| 0.5 * g.norm2).collect();
        let (f, mu) = smeared_free_energy(&levels, cfg.n_electrons, cfg.beta);
        assert!((s.state.free_energy.total - f).abs() < 1e-10, "{} vs {f}", s.state.free_energy.total);
        assert!((s.state.mu - mu).abs() < 1e-9);
        assert!(s.state.iterations <= 2);
    }
    let result = run_sweep(&cfg).unwrap();
    for p in &result.points {
        // every occupied mode is inside the smallest cutoff
        assert!(p.row.f_err < 1e-13 && p.row.rho_l2_err < 1e-13 && p.row.gamma_s11_err < 1e-12);
    }
    assert!(result.energy_fit.is_none());
    assert!(result.monotonicity().is_clean());
    assert!((result.a4.lambda_min - 1.0).abs() < 1e-14);
}

#[test]
fn interacting_sweep_decays_from_above() {
    let cfg = config("si1d");
    let result = run_sweep(&cfg).unwrap();
    assert_eq!(result.points.len(), 5);
    let mono = result.monotonicity();
    assert!(mono.is_clean(), "{mono:?}");
    let e = result.energy_fit.unwrap();
    let d = result.density_fit.unwrap();
    assert!(e.slope < 0.0 && e.exponential.r2 >= 0.95, "{e:?}");
    assert!(d.slope < 0.0 && d.exponential.r2 >= 0.95, "{d:?}");
    // energy errors decay faster than density errors
    assert!(e.exponential.slope < d.exponential.slope);
    for p in &result.points {
        assert!(p.row.f_total > result.reference_free_energy);
        assert!(p.row.ratio >= 1.0 - 1e-6 && p.row.ratio < 50.0);
        assert!(p.trace_error <= 1e-12 * cfg.n_electrons && p.orthonormality < 1e-10);
    }
    assert!(result.a4.lambda_min > 0.0 && result.a4.kappa.is_finite());
}

#[test]
fn worker_count_does_not_change_results() {
    let mut cfg = config("rhf1d");
    cfg.wall_clock = false;
    cfg.workers = 1;
    let a = run_sweep(&cfg).unwrap();
    cfg.workers = 4;
    let b = run_sweep(&cfg).unwrap();
    for (x, y) in a.rows().iter().zip(b.rows()) {
        assert_eq!(format!("{x:?}"), format!("{y:?}"));
    }
}

#[test]
fn three_dimensional_sweep() {
    let cfg = config("tiny3d");
    let result = run_sweep(&cfg).unwrap();
    assert!(result.monotonicity().is_clean());
    assert!(result.energy_fit.unwrap().slope < 0.0);
    for p in &result.points {
        assert!(p.trace_error <= 1e-12 * 2.0 && p.orthonormality < 1e-10);
    }
}

#[test]
fn sweep_preconditions() {
    let cfg = config("si1d").with_cutoffs(vec![10.0, 15.0, 20.0]).unwrap();
    assert!(matches!(run_sweep(&cfg), Err(HarnessError::InvalidKey { ref key, .. }) if key == "basis.cutoffs"));

    let text = config_text("si1d").replace("max_iterations = 200", "max_iterations = 3");
    let cfg = RunConfig::from_toml_str(&text).unwrap();
    match run_sweep_at(&cfg, cfg.beta) {
        Err(HarnessError::NotConverged { cutoff, iterations, .. }) => {
            assert_eq!(iterations, 3);
            assert!(cutoff == 80.0 || cfg.cutoffs.contains(&cutoff));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn quasi_optimality_on_the_chain() {
    let report = quasi_optimality(&config("si1d")).unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.max_ratio >= 1.0 - 1e-6 && report.max_ratio <= 50.0);
    assert!(report.orbital_constant.is_finite() && report.orbital_constant >= 1.0 - 1e-6);
    for r in &report.rows {
        assert!(r.basis_size <= 200);
        assert!(r.orbital_err <= report.orbital_constant * r.orbital_best * (1.0 + 1e-12));
    }
}

#[test]
fn dense_s11_norm_of_a_rank_one_plane_wave() {
    // |e_G⟩⟨e_G| has trace norm 1 and gradient part |G|²
    let cfg = config("free1d");
    let b = cfg.basis(4.0, None).unwrap();
    let n = b.len();
    let k = 2;
    let mut a = nalgebra::DMatrix::zeros(n, n);
    a[(k, k)] = mks_core::C64::new(1.0, 0.0);
    let expected = 1.0 + b.g_vectors()[k].norm2;
    assert!((dense_s11_norm(&a, &b) - expected).abs() < 1e-13);
}
