//! Browser bindings. Every operation returns a JSON string; the plain
//! `*_json` functions carry the logic and are what the native tests call.

use mks_core::scf::run_scf;
use mks_core::smearing::{fermi_dirac, occupations, solve_mu, Smearing};
use mks_harness::io::SweepSummary;
use mks_harness::sweep::run_sweep_at;
use mks_harness::RunConfig;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Samples of the occupation curve drawn between the extreme levels.
const CURVE_POINTS: usize = 201;

fn parse(config: &str) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::from_toml_str(config).map_err(|e| e.to_string())?;
    // no clock in the browser, and one worker
    cfg.wall_clock = false;
    cfg.workers = 1;
    Ok(cfg)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Fermi–Dirac occupations of `levels` holding `n` electrons at inverse
/// temperature `beta`, with the occupation curve `f(ε)` around them.
pub fn occupations_json(levels: &[f64], n: f64, beta: f64) -> Result<String, String> {
    if levels.is_empty() {
        return Err("at least one level is needed".into());
    }
    let s = Smearing::new(beta).map_err(|e| e.to_string())?;
    let mu = solve_mu(levels, n, s).map_err(|e| e.to_string())?;
    let f = occupations(levels, mu, s);
    let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = (hi - lo).max(1.0) * 0.25;
    let (a, b) = (lo - pad, hi + pad);
    let curve: Vec<[f64; 2]> = (0..CURVE_POINTS)
        .map(|k| {
            let e = a + (b - a) * k as f64 / (CURVE_POINTS - 1) as f64;
            [e, fermi_dirac(e, mu, s)]
        })
        .collect();
    to_json(&json!({ "mu": mu, "occupations": f, "curve": curve }))
}

/// SCF of a one-dimensional configuration at the given cutoff and `beta`:
/// density and effective potential on the grid plus the spectrum.
pub fn scf_json(config: &str, cutoff: f64, beta: f64) -> Result<String, String> {
    let cfg = parse(config)?;
    if cfg.dimension != 1 {
        return Err(format!("the demo plots 1D cells, found dimension {}", cfg.dimension));
    }
    let basis = cfg.basis(cutoff, None).map_err(|e| e.to_string())?;
    let problem = cfg.problem_on(basis.clone(), beta, cfg.scf).map_err(|e| e.to_string())?;
    let state = run_scf(&problem).map_err(|e| e.to_string())?;
    let h = problem.hamiltonian(&state.rho).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..basis.grid_len()).map(|j| basis.grid_point(j)[0]).collect();
    to_json(&json!({
        "x": x,
        "density": state.rho.real_values(),
        "potential": h.v_local().real_values(),
        "eigenvalues": state.gamma.eigenvalues().unwrap_or_default(),
        "occupations": state.gamma.occupations(),
        "mu": state.mu,
        "free_energy": state.free_energy.total,
        "iterations": state.iterations,
        "converged": state.converged,
        "basis_size": basis.len(),
    }))
}

/// Cutoff sweep at `beta` against the configured reference, with the decay
/// fits of the energy and density errors.
pub fn sweep_json(config: &str, beta: f64) -> Result<String, String> {
    let cfg = parse(config)?;
    let result = run_sweep_at(&cfg, beta).map_err(|e| e.to_string())?;
    to_json(&json!({
        "summary": SweepSummary::new(&result),
        "rows": result.rows(),
        "monotone": result.monotonicity().is_clean(),
    }))
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = occupations)]
pub fn occupations_js(levels: &[f64], n: f64, beta: f64) -> Result<String, JsError> {
    js(occupations_json(levels, n, beta))
}

#[wasm_bindgen(js_name = scf)]
pub fn scf_js(config: &str, cutoff: f64, beta: f64) -> Result<String, JsError> {
    js(scf_json(config, cutoff, beta))
}

#[wasm_bindgen(js_name = sweep)]
pub fn sweep_js(config: &str, beta: f64) -> Result<String, JsError> {
    js(sweep_json(config, beta))
}
