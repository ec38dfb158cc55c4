//! Least-squares decay fits of `log(err)` against `E_c` or `log E_c`.

use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayModel {
    /// `err ≈ A exp(slope · E_c)`.
    Exponential,
    /// `err ≈ A E_c^slope`.
    Algebraic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub exponential: LinearFit,
    pub algebraic: LinearFit,
    /// Points above the floor that entered the fit.
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    // a constant series is fitted exactly by a flat line
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit { slope, intercept, r2 }
}

/// Fits both decay models to the points with `err > floor` and selects the
/// one with the larger R².
pub fn fit_decay(points: &[(f64, f64)], floor: f64) -> Result<DecayFit> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(ec, e)| e > floor && e.is_finite() && ec > 0.0)
        .collect();
    if kept.len() < 4 {
        return Err(HarnessError::Fit(format!(
            "{} of {} points lie above the floor {floor:.1e}; need at least 4",
            kept.len(),
            points.len()
        )));
    }
    let ec: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let log_ec: Vec<f64> = ec.iter().map(|x| x.ln()).collect();
    let log_err: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
    let exponential = linear_fit(&ec, &log_err);
    let algebraic = linear_fit(&log_ec, &log_err);
    let (model, best) = if exponential.r2 >= algebraic.r2 {
        (DecayModel::Exponential, exponential)
    } else {
        (DecayModel::Algebraic, algebraic)
    };
    Ok(DecayFit {
        model,
        slope: best.slope,
        intercept: best.intercept,
        r2: best.r2,
        exponential,
        algebraic,
        points: kept.len(),
    })
}
