use mks_wasm::{occupations_json, scf_json, sweep_json};
use serde_json::Value;

const SI1D: &str = include_str!("../../harness/configs/si1d.cfg");
const FREE1D: &str = include_str!("../../harness/configs/free1d.cfg");
const TINY3D: &str = include_str!("../../harness/configs/tiny3d.cfg");

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn occupations_match_the_fermi_function() {
    let levels = [-1.0, -0.5, 0.0, 0.3, 1.2];
    let (n, beta) = (2.5, 7.0);
    let out = parse(occupations_json(&levels, n, beta).unwrap());
    let mu = out["mu"].as_f64().unwrap();
    let f = floats(&out["occupations"]);
    for (e, fi) in levels.iter().zip(&f) {
        assert!((fi - 1.0 / (1.0 + (beta * (e - mu)).exp())).abs() < 1e-14);
    }
    assert!((f.iter().sum::<f64>() - n).abs() < 1e-12);
    let curve: Vec<Vec<f64>> = out["curve"].as_array().unwrap().iter().map(floats).collect();
    assert!(curve.windows(2).all(|w| w[1][0] > w[0][0] && w[1][1] <= w[0][1]));
}

#[test]
fn occupations_reject_bad_input() {
    assert!(occupations_json(&[], 1.0, 1.0).is_err());
    assert!(occupations_json(&[0.0, 1.0], 1.0, -1.0).is_err());
    assert!(occupations_json(&[0.0, 1.0], 3.0, 1.0).is_err());
}

#[test]
fn free_electron_density_is_uniform() {
    let out = parse(scf_json(FREE1D, 12.0, 20.0).unwrap());
    assert!(out["converged"].as_bool().unwrap());
    let rho = floats(&out["density"]);
    let uniform = 4.0 / (2.0 * std::f64::consts::PI);
    assert!(rho.iter().all(|r| (r - uniform).abs() < 1e-10));
    assert!(floats(&out["potential"]).iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn chain_density_integrates_to_the_electron_count() {
    let out = parse(scf_json(SI1D, 20.0, 100.0).unwrap());
    assert!(out["converged"].as_bool().unwrap());
    let x = floats(&out["x"]);
    let rho = floats(&out["density"]);
    assert_eq!(x.len(), rho.len());
    assert_eq!(floats(&out["potential"]).len(), rho.len());
    let integral: f64 = rho.iter().sum::<f64>() * 10.0 / rho.len() as f64;
    assert!((integral - 3.0).abs() < 1e-10);
    assert!((floats(&out["occupations"]).iter().sum::<f64>() - 3.0).abs() < 1e-10);
}

#[test]
fn scf_reports_configuration_errors() {
    assert!(scf_json(TINY3D, 4.0, 50.0).unwrap_err().contains("1D"));
    let missing = SI1D.replace("count = 3", "");
    assert!(scf_json(&missing, 20.0, 100.0).unwrap_err().contains("electrons.count"));
}

#[test]
fn sweep_reports_exponential_decay() {
    let out = parse(sweep_json(SI1D, 100.0).unwrap());
    assert_eq!(out["rows"].as_array().unwrap().len(), 5);
    assert_eq!(out["summary"]["model"], "exponential");
    assert!(out["summary"]["r2"].as_f64().unwrap() > 0.95);
    assert!(out["monotone"].as_bool().unwrap());
    assert!(out["rows"].as_array().unwrap().iter().all(|r| r["wall_s"] == 0.0));
}
