#![allow(dead_code)]

use std::path::PathBuf;

use mks_harness::RunConfig;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.cfg"))
}

pub fn config(name: &str) -> RunConfig {
    RunConfig::from_path(&config_path(name)).unwrap()
}

pub fn config_text(name: &str) -> String {
    std::fs::read_to_string(config_path(name)).unwrap()
}

/// Grand-potential form `μN - β⁻¹ Σ ln(1 + e^{-β(ε-μ)})` of the smeared free
/// energy of independent levels, with `μ` found by plain bisection.
pub fn smeared_free_energy(levels: &[f64], n: f64, beta: f64) -> (f64, f64) {
    let count = |mu: f64| -> f64 { levels.iter().map(|e| 1.0 / (1.0 + (beta * (e - mu)).exp())).sum() };
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count(mid) < n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let omega: f64 = levels
        .iter()
        .map(|e| {
            let x = -beta * (e - mu);
            // ln(1 + e^x) without overflow
            if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() }
        })
        .sum::<f64>()
        / beta;
    (mu * n - omega, mu)
}
