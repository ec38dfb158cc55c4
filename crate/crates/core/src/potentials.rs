//! External potentials, the periodic Hartree solve and LDA exchange-correlation.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::cell_basis::{dot, Cell, GridFunction, PlaneWaveBasis};
use crate::{Error, Result, C64};

/// Densities are clamped to this floor before fractional powers.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Grid densities below `-NEGATIVE_DENSITY_TOL` are rejected.
pub const NEGATIVE_DENSITY_TOL: f64 = 1e-8;

/// Slater/Dirac exchange prefactor `(3/4)(3/π)^{1/3}`.
pub const DIRAC_COEFFICIENT: f64 = 0.738558766;
const WIGNER_A: f64 = 0.44;
const WIGNER_B: f64 = 7.8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianWell {
    pub center: [f64; 3],
    /// Positive depth gives an attractive well (hartree).
    pub depth: f64,
    pub width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineTerm {
    /// Integer reciprocal coordinates of the harmonic.
    pub harmonic: [i32; 3],
    pub amplitude: f64,
}

/// Smooth periodic external potential.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum ExternalPotential {
    #[default]
    Zero,
    /// `v(x) = -Σ_a D_a Σ_R exp(-|x - c_a - R|² / 2w_a²)`.
    GaussianWells(Vec<GaussianWell>),
    /// `v(x) = Σ_m A_m cos(G_m · x)`.
    CosineSeries(Vec<CosineTerm>),
}

impl ExternalPotential {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExternalPotential::Zero => Ok(()),
            ExternalPotential::GaussianWells(wells) => {
                for w in wells {
                    if !(w.width.is_finite() && w.width > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "well width must be positive, got {}",
                            w.width
                        )));
                    }
                    if !w.depth.is_finite() || w.center.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidParameter("non-finite well parameter".into()));
                    }
                }
                Ok(())
            }
            ExternalPotential::CosineSeries(terms) => {
                if terms.iter().any(|t| !t.amplitude.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite cosine amplitude".into()));
                }
                Ok(())
            }
        }
    }

    /// Exact values on the FFT grid of `basis`.
    pub fn on_grid(&self, basis: &Arc<PlaneWaveBasis>) -> GridFunction {
        let cell = basis.cell();
        let d = cell.dimension();
        let values: Vec<f64> = match self {
            ExternalPotential::Zero => vec![0.0; basis.grid_len()],
            ExternalPotential::GaussianWells(wells) => {
                // interplanar spacing along each lattice direction
                let spacing: Vec<f64> = (0..d)
                    .map(|k| {
                        let b = cell.reciprocal_vector(k);
                        2.0 * PI / dot(&b, &b).sqrt()
                    })
                    .collect();
                let images: Vec<Vec<i32>> = wells
                    .iter()
                    .map(|w| {
                        (0..3)
                            .map(|k| {
                                if k < d {
                                    (10.0 * w.width / spacing[k]).ceil() as i32 + 1
                                } else {
                                    0
                                }
                            })
                            .collect()
                    })
                    .collect();
                (0..basis.grid_len())
                    .map(|j| {
                        let r = basis.grid_point(j);
                        wells
                            .iter()
                            .zip(&images)
                            .map(|(w, img)| well_value(cell, w, r, img))
                            .sum()
                    })
                    .collect()
            }
            ExternalPotential::CosineSeries(terms) => (0..basis.grid_len())
                .map(|j| {
                    let r = basis.grid_point(j);
                    terms
                        .iter()
                        .map(|t| {
                            let g = cell.reciprocal_cartesian(t.harmonic);
                            t.amplitude * dot(&g, &r).cos()
                        })
                        .sum()
                })
                .collect(),
        };
        GridFunction::from_real(basis.clone(), &values).expect("grid length")
    }

    /// Exact Fourier coefficient `(e_G, v)` for reciprocal coordinates `m`.
    pub fn fourier_coefficient(&self, cell: &Cell, m: [i32; 3]) -> C64 {
        let g = cell.reciprocal_cartesian(m);
        let g2 = dot(&g, &g);
        let vol = cell.volume();
        match self {
            ExternalPotential::Zero => C64::new(0.0, 0.0),
            ExternalPotential::GaussianWells(wells) => wells
                .iter()
                .map(|w| {
                    let d = cell.dimension() as i32;
                    let amp = -w.depth
                        * (2.0 * PI * w.width * w.width).powf(d as f64 / 2.0)
                        * (-0.5 * w.width * w.width * g2).exp()
                        / vol.sqrt();
                    C64::from_polar(amp, -dot(&g, &w.center))
                })
                .sum(),
            ExternalPotential::CosineSeries(terms) => terms
                .iter()
                .map(|t| {
                    let plus = t.harmonic == m;
                    let minus = t.harmonic.map(|x| -x) == m;
                    let weight = (plus as u8 + minus as u8) as f64 * 0.5;
                    C64::new(t.amplitude * weight * vol.sqrt(), 0.0)
                })
                .sum(),
        }
    }
}

fn well_value(cell: &Cell, w: &GaussianWell, r: [f64; 3], images: &[i32]) -> f64 {
    let diff = [r[0] - w.center[0], r[1] - w.center[1], r[2] - w.center[2]];
    let mut s = cell.cartesian_to_fractional(diff);
    for sk in s.iter_mut().take(cell.dimension()) {
        *sk -= sk.round();
    }
    let inv = 1.0 / (2.0 * w.width * w.width);
    let mut total = 0.0;
    for n0 in -images[0]..=images[0] {
        for n1 in -images[1]..=images[1] {
            for n2 in -images[2]..=images[2] {
                let x = cell.fractional_to_cartesian([
                    s[0] + n0 as f64,
                    s[1] + n1 as f64,
                    s[2] + n2 as f64,
                ]);
                total += (-dot(&x, &x) * inv).exp();
            }
        }
    }
    -w.depth * total
}

/// Value and first three derivatives of a scalar function of one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Jet {
    pub fn variable(t: f64) -> Self {
        Self {
            value: t,
            d1: 1.0,
            d2: 0.0,
            d3: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            value: c,
            d1: 0.0,
            d2: 0.0,
            d3: 0.0,
        }
    }

    /// `h ∘ self` given `h` and its first three derivatives at `self.value`.
    fn compose(self, h: [f64; 4]) -> Self {
        let (f1, f2, f3) = (self.d1, self.d2, self.d3);
        Self {
            value: h[0],
            d1: h[1] * f1,
            d2: h[2] * f1 * f1 + h[1] * f2,
            d3: h[3] * f1 * f1 * f1 + 3.0 * h[2] * f1 * f2 + h[1] * f3,
        }
    }

    pub fn powf(self, p: f64) -> Self {
        let x = self.value;
        self.compose([
            x.powf(p),
            p * x.powf(p - 1.0),
            p * (p - 1.0) * x.powf(p - 2.0),
            p * (p - 1.0) * (p - 2.0) * x.powf(p - 3.0),
        ])
    }

    pub fn recip(self) -> Self {
        self.powf(-1.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            value: self.value + o.value,
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
            d3: self.d3 + o.d3,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet {
            value: self.value * c,
            d1: self.d1 * c,
            d2: self.d2 * c,
            d3: self.d3 * c,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            value: self.value * o.value,
            d1: self.d1 * o.value + self.value * o.d1,
            d2: self.d2 * o.value + 2.0 * self.d1 * o.d1 + self.value * o.d2,
            d3: self.d3 * o.value
                + 3.0 * self.d2 * o.d1
                + 3.0 * self.d1 * o.d2
                + self.value * o.d3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum XcModel {
    /// `e(t) = -c t^{4/3}`.
    Dirac { coefficient: f64 },
    /// Dirac exchange plus Wigner correlation `-a t^{4/3} / (r₀ + b t^{1/3})`,
    /// `r₀ = (3/4π)^{1/3}`.
    DiracWigner { coefficient: f64 },
}

/// Constants of the growth bounds
/// `|e(t)| ≤ c0 (t^{4/3} + 1)`,
/// `|e'(t)| + |t e''(t)| ≤ c1 (1 + t^{p1})`,
/// `|e''(t)| + |t e'''(t)| ≤ c2 (1 + t^{p2-1})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthBounds {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub p1: f64,
    pub p2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XcFunctional {
    pub model: XcModel,
    pub bounds: GrowthBounds,
}

impl XcFunctional {
    pub fn dirac(coefficient: f64) -> Self {
        Self {
            model: XcModel::Dirac { coefficient },
            bounds: GrowthBounds {
                c0: coefficient.abs(),
                c1: 16.0 * coefficient.abs() / 9.0,
                c2: 20.0 * coefficient.abs() / 27.0,
                p1: 1.0 / 3.0,
                p2: 1.0 / 3.0,
            },
        }
    }

    pub fn dirac_wigner(coefficient: f64) -> Self {
        let r0 = (3.0 / (4.0 * PI)).cbrt();
        Self {
            model: XcModel::DiracWigner { coefficient },
            bounds: GrowthBounds {
                c0: coefficient.abs() + WIGNER_A / WIGNER_B,
                c1: 16.0 * coefficient.abs() / 9.0 + 2.0 * WIGNER_A / WIGNER_B,
                c2: 20.0 * coefficient.abs() / 27.0 + WIGNER_A / r0,
                p1: 1.0 / 3.0,
                p2: 1.0 / 3.0,
            },
        }
    }

    /// `e(t)` and its derivatives; `t` is clamped to [`DENSITY_FLOOR`].
    pub fn eval(&self, t: f64) -> Jet {
        let t = Jet::variable(t.max(DENSITY_FLOOR));
        let t43 = t.powf(4.0 / 3.0);
        match self.model {
            XcModel::Dirac { coefficient } => t43 * -coefficient,
            XcModel::DiracWigner { coefficient } => {
                let r0 = (3.0 / (4.0 * PI)).cbrt();
                let denom = t.powf(1.0 / 3.0) * WIGNER_B + Jet::constant(r0);
                t43 * -coefficient - t43 * denom.recip() * WIGNER_A
            }
        }
    }

    /// Checks the growth bounds on the sample points, reporting the largest
    /// `lhs / rhs` ratio for each (≤ 1 means satisfied).
    pub fn audit(&self, samples: &[f64]) -> GrowthAudit {
        let b = self.bounds;
        let mut audit = GrowthAudit {
            samples: samples.len(),
            density_floor: DENSITY_FLOOR,
            ..Default::default()
        };
        for &t in samples {
            let j = self.eval(t);
            let t = t.max(DENSITY_FLOOR);
            let r0 = j.value.abs() / (b.c0 * (t.powf(4.0 / 3.0) + 1.0));
            let r1 = (j.d1.abs() + (t * j.d2).abs()) / (b.c1 * (1.0 + t.powf(b.p1)));
            let r2 = (j.d2.abs() + (t * j.d3).abs()) / (b.c2 * (1.0 + t.powf(b.p2 - 1.0)));
            audit.growth_ratio = audit.growth_ratio.max(r0);
            audit.first_derivative_ratio = audit.first_derivative_ratio.max(r1);
            audit.second_derivative_ratio = audit.second_derivative_ratio.max(r2);
            if r0 > 1.0 || r1 > 1.0 || r2 > 1.0 {
                audit.violations.push(t);
            }
            if (0.01..=10.0).contains(&t) {
                let h = 1e-6 * t;
                let fd = (self.eval(t + h).value - self.eval(t - h).value) / (2.0 * h);
                let rel = (fd - j.d1).abs() / j.d1.abs().max(1e-300);
                audit.derivative_fd_error = audit.derivative_fd_error.max(rel);
            }
        }
        audit
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GrowthAudit {
    pub samples: usize,
    pub growth_ratio: f64,
    pub first_derivative_ratio: f64,
    pub second_derivative_ratio: f64,
    pub derivative_fd_error: f64,
    /// Densities below this are evaluated at the floor, so the bounds are not
    /// asserted at `t = 0` itself.
    pub density_floor: f64,
    pub violations: Vec<f64>,
}

impl GrowthAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `n` log-spaced samples on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

/// Which mean-field terms enter the effective potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interactions {
    pub hartree: bool,
    pub xc: Option<XcFunctional>,
}

impl Interactions {
    pub fn none() -> Self {
        Self {
            hartree: false,
            xc: None,
        }
    }

    pub fn is_noninteracting(&self) -> bool {
        !self.hartree && self.xc.is_none()
    }
}

/// Periodic Hartree potential with kernel `4π/|G|²` and `K̂(0) = 0`, and the
/// energy `½ Σ_G K̂(G) |ρ̂_G|²`.
pub fn hartree(rho: &GridFunction) -> (GridFunction, f64) {
    let basis = rho.basis().clone();
    let mut coeffs = rho.fourier();
    let mut energy = 0.0;
    for (c, &g2) in coeffs.iter_mut().zip(basis.grid_g2()) {
        if g2 > 0.0 {
            let k = 4.0 * PI / g2;
            energy += 0.5 * k * c.norm_sqr();
            *c *= k;
        } else {
            *c = C64::new(0.0, 0.0);
        }
    }
    let mut v = GridFunction::from_fourier(basis, coeffs).expect("grid length");
    // the density is real, so the potential is too
    v.values_mut().iter_mut().for_each(|x| x.im = 0.0);
    (v, energy)
}

fn checked_density(rho: &GridFunction) -> Result<Vec<f64>> {
    rho.values()
        .iter()
        .enumerate()
        .map(|(index, x)| {
            if x.re < -NEGATIVE_DENSITY_TOL || !x.re.is_finite() {
                Err(Error::NegativeDensity { index, value: x.re })
            } else {
                Ok(x.re.max(DENSITY_FLOOR))
            }
        })
        .collect()
}

/// `E_xc = ∫ e(ρ)` by grid quadrature and `v_xc = e'(ρ)` pointwise.
pub fn xc_eval(rho: &GridFunction, f: &XcFunctional) -> Result<(GridFunction, f64)> {
    let t = checked_density(rho)?;
    let mut energy = 0.0;
    let mut v = Vec::with_capacity(t.len());
    for &x in &t {
        let j = f.eval(x);
        energy += j.value;
        v.push(j.d1);
    }
    let basis = rho.basis().clone();
    energy *= basis.grid_weight();
    Ok((GridFunction::from_real(basis, &v)?, energy))
}

/// Pointwise `e''(ρ)`, the LDA response kernel.
pub fn xc_kernel(rho: &GridFunction, f: &XcFunctional) -> Result<Vec<f64>> {
    Ok(checked_density(rho)?
        .into_iter()
        .map(|x| f.eval(x).d2)
        .collect())
}

#[derive(Clone, Debug)]
pub struct EffectivePotentialTerms {
    pub v_ext: GridFunction,
    pub v_hartree: GridFunction,
    pub v_xc: GridFunction,
    pub e_external: f64,
    pub e_hartree: f64,
    pub e_xc: f64,
}

impl EffectivePotentialTerms {
    /// `v_ext + v_H + v_xc`.
    pub fn total(&self) -> GridFunction {
        self.v_ext
            .add(&self.v_hartree)
            .and_then(|v| v.add(&self.v_xc))
            .expect("terms share one grid")
    }
}

/// Effective potential components and the non-kinetic energy terms.
pub fn assemble_effective(
    rho: &GridFunction,
    vext: &GridFunction,
    interactions: &Interactions,
) -> Result<EffectivePotentialTerms> {
    if !rho.same_grid(vext) {
        return Err(Error::IncompatibleBasis(
            "density and external potential live on different grids".into(),
        ));
    }
    let basis = rho.basis().clone();
    let e_external = rho
        .values()
        .iter()
        .zip(vext.values())
        .map(|(r, v)| r.re * v.re)
        .sum::<f64>()
        * basis.grid_weight();
    let (v_hartree, e_hartree) = if interactions.hartree {
        hartree(rho)
    } else {
        (GridFunction::zeros(basis.clone()), 0.0)
    };
    let (v_xc, e_xc) = match &interactions.xc {
        Some(f) => xc_eval(rho, f)?,
        None => (GridFunction::zeros(basis.clone()), 0.0),
    };
    Ok(EffectivePotentialTerms {
        v_ext: vext.clone(),
        v_hartree,
        v_xc,
        e_external,
        e_hartree,
        e_xc,
    })
}
