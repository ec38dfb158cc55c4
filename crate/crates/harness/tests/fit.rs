use mks_harness::fit::{fit_decay, linear_fit, DecayModel};
use mks_harness::HarnessError;
use proptest::prelude::*;

#[test]
fn exact_exponential_data() {
    let pts: Vec<(f64, f64)> = (1..=8).map(|k| {
        let ec = 2.0 * k as f64;
        (ec, 3e-2 * (-0.8 * ec).exp())
    }).collect();
    let fit = fit_decay(&pts, 1e-30).unwrap();
    assert_eq!(fit.model, DecayModel::Exponential);
    assert!((fit.slope + 0.8).abs() < 1e-6);
    assert!((fit.intercept - 3e-2f64.ln()).abs() < 1e-6);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
}

#[test]
fn exact_algebraic_data() {
    let pts: Vec<(f64, f64)> = [2.0, 3.0, 5.0, 8.0, 13.0, 21.0].iter().map(|&ec: &f64| (ec, ec.powi(-3))).collect();
    let fit = fit_decay(&pts, 1e-30).unwrap();
    assert_eq!(fit.model, DecayModel::Algebraic);
    assert!((fit.slope + 3.0).abs() < 1e-6);
    assert!(fit.exponential.r2 < fit.algebraic.r2);
}

#[test]
fn points_at_the_floor_are_dropped() {
    let mut pts: Vec<(f64, f64)> = (1..=5).map(|k| (k as f64, (-(k as f64)).exp())).collect();
    pts.push((6.0, 1e-14));
    pts.push((7.0, 0.0));
    let fit = fit_decay(&pts, 1e-12).unwrap();
    assert_eq!(fit.points, 5);
    assert!((fit.slope + 1.0).abs() < 1e-10);

    let floor: Vec<(f64, f64)> = (1..=6).map(|k| (k as f64, 1e-16)).collect();
    assert!(matches!(fit_decay(&floor, 1e-12), Err(HarnessError::Fit(_))));
    assert!(fit_decay(&pts[..3], 0.0).is_err());
}

#[test]
fn r2_of_noisy_line() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [1.0, 3.0, 2.0, 4.0];
    // by hand: slope 0.8, intercept 0.5, SS_res 1.8, SS_tot 5
    let f = linear_fit(&x, &y);
    assert!((f.slope - 0.8).abs() < 1e-12 && (f.intercept - 0.5).abs() < 1e-12);
    assert!((f.r2 - 0.64).abs() < 1e-12);
}

proptest! {
    #[test]
    fn recovers_any_exponential_rate(a in 1e-6f64..1e2, k in 0.01f64..2.0, start in 1.0f64..20.0) {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| {
            let ec = start + i as f64 * 2.0;
            (ec, a * (-k * ec).exp())
        }).collect();
        let fit = fit_decay(&pts, 0.0).unwrap();
        prop_assert!((fit.exponential.slope + k).abs() < 1e-9 * (1.0 + k));
        prop_assert!(fit.exponential.r2 > 1.0 - 1e-9);
        prop_assert!(fit.r2 >= fit.exponential.r2.min(fit.algebraic.r2));
    }
}
