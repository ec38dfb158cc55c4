//! Fermi-Dirac smearing: occupations, their derivatives, the entropy and the
//! chemical-potential solve.

use crate::{Error, Result};

/// Occupations below this are treated as exactly zero in the entropy.
const UNDERFLOW_OCCUPATION: f64 = 1e-300;
const OCCUPATION_SLACK: f64 = 1e-12;

/// Inverse temperature `β` (hartree⁻¹).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smearing {
    beta: f64,
}

impl Smearing {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive and finite, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }
}

/// Sign convention for `g_μ = ∂f_μ/∂μ`.
///
/// `Paper` keeps the printed expression `-β e^{β(x-μ)} (1+e^{β(x-μ)})^{-2}`,
/// which is negative; `Analytic` is the true derivative with respect to μ,
/// which is positive. The Jacobian solve is exercised under both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GSign {
    #[default]
    Paper,
    Analytic,
}

impl GSign {
    pub fn as_str(&self) -> &'static str {
        match self {
            GSign::Paper => "paper",
            GSign::Analytic => "analytic",
        }
    }
}

/// `(1 + exp(β(ε-μ)))⁻¹`, overflow-free for any argument.
pub fn fermi_dirac(eps: f64, mu: f64, s: Smearing) -> f64 {
    logistic(s.beta * (eps - mu))
}

fn logistic(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// The printed `g_μ(ε) = -β e^{β(ε-μ)} (1+e^{β(ε-μ)})^{-2} = -β f (1-f)`.
pub fn fermi_dirac_dmu(eps: f64, mu: f64, s: Smearing) -> f64 {
    let x = s.beta * (eps - mu);
    -s.beta * logistic(x) * logistic(-x)
}

/// `g_μ(ε)` under the chosen sign convention.
pub fn g_mu(eps: f64, mu: f64, s: Smearing, sign: GSign) -> f64 {
    match sign {
        GSign::Paper => fermi_dirac_dmu(eps, mu, s),
        GSign::Analytic => -fermi_dirac_dmu(eps, mu, s),
    }
}

/// `∂f_μ/∂ε = -β f (1-f)`.
pub fn fermi_dirac_deps(eps: f64, mu: f64, s: Smearing) -> f64 {
    fermi_dirac_dmu(eps, mu, s)
}

/// Divided difference `(f(a) - f(b)) / (a - b)` with the limit `f'(a)` on the
/// diagonal, evaluated without cancellation for nearby arguments.
pub fn divided_difference(a: f64, b: f64, mu: f64, s: Smearing) -> f64 {
    let beta = s.beta;
    let dx = beta * (a - b);
    if dx == 0.0 {
        return fermi_dirac_deps(a, mu, s);
    }
    if dx.abs() < 1.0 {
        // f(a) - f(b) = -f(a) (1 - f(b)) expm1(β(a-b))
        let y = beta * (b - mu);
        -fermi_dirac(a, mu, s) * logistic(-y) * dx.exp_m1() / (a - b)
    } else {
        (fermi_dirac(a, mu, s) - fermi_dirac(b, mu, s)) / (a - b)
    }
}

pub fn occupations(eigenvalues: &[f64], mu: f64, s: Smearing) -> Vec<f64> {
    eigenvalues.iter().map(|&e| fermi_dirac(e, mu, s)).collect()
}

fn electron_count(eigenvalues: &[f64], mu: f64, s: Smearing) -> (f64, f64) {
    let mut count = 0.0;
    let mut slope = 0.0;
    for &e in eigenvalues {
        let x = s.beta * (e - mu);
        let f = logistic(x);
        count += f;
        slope += s.beta * f * logistic(-x);
    }
    (count, slope)
}

/// Chemical potential with `Σ_i f_μ(λ_i) = N`.
///
/// Bisection on a bracket seeded at `[min λ - 10/β, max λ + 10/β]`,
/// switching to safeguarded Newton once the bracket is narrower than `1/β`.
pub fn solve_mu(eigenvalues: &[f64], n: f64, s: Smearing) -> Result<f64> {
    let levels = eigenvalues.len();
    if !(n > 0.0 && n < levels as f64) || !n.is_finite() {
        return Err(Error::InfeasibleElectronCount { n, levels });
    }
    if eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter("non-finite eigenvalue".into()));
    }
    let tol = 1e-14 * n.max(1e-300);
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = 10.0 / s.beta;
    let (mut lo, mut hi) = (min - width, max + width);
    let mut step = width;
    while electron_count(eigenvalues, lo, s).0 > n {
        lo -= step;
        step *= 2.0;
    }
    step = width;
    while electron_count(eigenvalues, hi, s).0 < n {
        hi += step;
        step *= 2.0;
    }

    let mut mu = 0.5 * (lo + hi);
    for _ in 0..2000 {
        let (count, slope) = electron_count(eigenvalues, mu, s);
        let resid = count - n;
        if resid.abs() <= tol {
            return Ok(mu);
        }
        if resid > 0.0 {
            hi = mu;
        } else {
            lo = mu;
        }
        let bisect = 0.5 * (lo + hi);
        if bisect == lo || bisect == hi {
            return Ok(mu);
        }
        mu = if (hi - lo) * s.beta < 1.0 && slope > 0.0 {
            let newton = mu - resid / slope;
            if newton > lo && newton < hi {
                newton
            } else {
                bisect
            }
        } else {
            bisect
        };
    }
    Ok(mu)
}

/// `β⁻¹ Σ_i (f_i ln f_i + (1-f_i) ln(1-f_i))` with `0 ln 0 = 0`.
pub fn entropy(occupations: &[f64], s: Smearing) -> Result<f64> {
    let mut sum = 0.0;
    for (index, &f) in occupations.iter().enumerate() {
        if !(-OCCUPATION_SLACK..=1.0 + OCCUPATION_SLACK).contains(&f) || !f.is_finite() {
            return Err(Error::OccupationOutOfRange { index, value: f });
        }
        let f = f.clamp(0.0, 1.0);
        sum += xlogx(f) + xlogx(1.0 - f);
    }
    Ok(sum / s.beta)
}

fn xlogx(x: f64) -> f64 {
    if x < UNDERFLOW_OCCUPATION {
        0.0
    } else {
        x * x.ln()
    }
}
