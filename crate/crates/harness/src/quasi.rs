//! Quasi-optimality of the Galerkin solutions: discretisation error versus
//! best-approximation error, for density matrices and for orbitals.

use std::sync::Arc;

use mks_core::cell_basis::{coefficient_h1_norm2, PlaneWaveBasis};
use mks_core::linalg::hermitian_eigen;
use mks_core::scf::ScfState;
use mks_core::C64;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::fit::linear_fit;
use crate::sweep::{projected_reference, solve_ladder, RATIO_FLOOR};

/// Largest reference basis for which dense `𝔖¹,¹` norms are formed.
pub const DENSE_LIMIT: usize = 1024;
/// Orbitals with at least this reference occupation enter the orbital check.
pub const ORBITAL_OCCUPATION: f64 = 1e-2;
/// Eigenvalues closer than this are treated as one degenerate cluster.
const CLUSTER_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuasiRow {
    pub ec: f64,
    pub basis_size: usize,
    pub gamma_err: f64,
    pub best_err: f64,
    pub ratio: f64,
    pub orbital_err: f64,
    pub orbital_best: f64,
    pub orbital_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasiReport {
    pub beta: f64,
    pub reference_cutoff: f64,
    pub rows: Vec<QuasiRow>,
    pub max_ratio: f64,
    /// Recorded constant of the orbital estimate: the largest orbital ratio.
    pub orbital_constant: f64,
    pub bound: f64,
    /// Least-squares slope of the ratio against the cutoff.
    pub trend_slope: f64,
    pub bounded: bool,
    pub non_increasing: bool,
}

impl QuasiReport {
    pub fn passed(&self) -> bool {
        self.bounded && self.non_increasing
    }
}

/// `Tr|A| + Tr||∇|A|∇||` of a Hermitian matrix in plane-wave coordinates.
pub fn dense_s11_norm(a: &DMatrix<C64>, basis: &PlaneWaveBasis) -> f64 {
    let k: Vec<f64> = basis.g_vectors().iter().map(|g| g.norm2.sqrt()).collect();
    let grad = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * (k[i] * k[j]));
    let trace_norm = |m: &DMatrix<C64>| hermitian_eigen(m).0.iter().map(|x| x.abs()).sum::<f64>();
    trace_norm(a) + trace_norm(&grad)
}

fn dense_gamma(state: &ScfState, fine: &Arc<PlaneWaveBasis>) -> Result<DMatrix<C64>> {
    Ok(state.gamma.to_operator().embed(fine)?.dense())
}

/// Columns of `coarse` rotated within degenerate clusters of the reference
/// spectrum to best match `fine` (a phase for a simple eigenvalue).
fn align(fine: &DMatrix<C64>, coarse: &DMatrix<C64>, clusters: &[std::ops::Range<usize>]) -> DMatrix<C64> {
    let mut out = coarse.clone();
    for c in clusters {
        let f = fine.columns(c.start, c.len());
        let g = coarse.columns(c.start, c.len());
        // polar factor of G*F maximises Re Tr(U* G* F)
        let overlap = g.adjoint() * f;
        let svd = overlap.svd(true, true);
        let u = svd.u.unwrap() * svd.v_t.unwrap();
        out.columns_mut(c.start, c.len()).copy_from(&(g * u));
    }
    out
}

fn clusters(values: &[f64], count: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < count {
        let mut end = start + 1;
        while end < values.len() && (values[end] - values[end - 1]).abs() < CLUSTER_GAP {
            end += 1;
        }
        out.push(start..end);
        start = end;
    }
    out
}

fn column_h1(basis: &PlaneWaveBasis, m: &DMatrix<C64>, j: usize) -> f64 {
    let c: Vec<C64> = m.column(j).iter().copied().collect();
    coefficient_h1_norm2(basis, &c).sqrt()
}

pub fn quasi_optimality(config: &RunConfig) -> Result<QuasiReport> {
    quasi_optimality_at(config, config.beta)
}

pub fn quasi_optimality_at(config: &RunConfig, beta: f64) -> Result<QuasiReport> {
    let ref_basis = config.basis(config.reference_cutoff(), None)?;
    if ref_basis.len() > DENSE_LIMIT {
        return Err(HarnessError::Check(format!(
            "dense 𝔖¹,¹ norms need a reference basis of at most {DENSE_LIMIT} plane waves, found {}",
            ref_basis.len()
        )));
    }
    let (reference, swept) = solve_ladder(config, beta)?;
    let fine = reference.state.gamma.basis().clone();
    let gamma_ref = dense_gamma(&reference.state, &fine)?;

    let ref_gamma = &reference.state.gamma;
    let ref_values = ref_gamma
        .eigenvalues()
        .ok_or_else(|| HarnessError::Check("reference state lacks eigenvalues".into()))?;
    let occupied = ref_gamma
        .occupations()
        .iter()
        .take_while(|&&f| f >= ORBITAL_OCCUPATION)
        .count();
    let groups = clusters(ref_values, occupied);
    let count = groups.last().map_or(0, |g| g.end);
    let phi_ref = ref_gamma.orbitals().columns(0, count).into_owned();

    let mut rows = Vec::new();
    for s in &swept {
        let coarse = s.state.gamma.basis();
        let gamma_n = dense_gamma(&s.state, &fine)?;
        let gamma_err = dense_s11_norm(&(&gamma_n - &gamma_ref), &fine);
        let best = projected_reference(&reference.state, coarse, config.projection)?.dense();
        let best_err = dense_s11_norm(&(best - &gamma_ref), &fine);
        let ratio = if best_err > RATIO_FLOOR {
            gamma_err / best_err
        } else {
            f64::NAN
        };

        if s.state.gamma.len() < count {
            return Err(HarnessError::Check(format!(
                "cutoff {} retains {} orbitals, the reference check needs {count}",
                s.cutoff,
                s.state.gamma.len()
            )));
        }
        let phi_n = s
            .state
            .gamma
            .to_operator()
            .embed(&fine)?
            .vectors()
            .columns(0, count)
            .into_owned();
        let aligned = align(&phi_ref, &phi_n, &groups);
        let diff = &phi_ref - aligned;
        let mut orbital_err: f64 = 0.0;
        let mut orbital_best: f64 = 0.0;
        for j in 0..count {
            orbital_err = orbital_err.max(column_h1(&fine, &diff, j));
            let col: Vec<C64> = phi_ref.column(j).iter().copied().collect();
            let kept = coarse.embed(&fine.restrict(&col, coarse)?, &fine)?;
            let tail: Vec<C64> = col.iter().zip(&kept).map(|(a, b)| a - b).collect();
            orbital_best = orbital_best.max(coefficient_h1_norm2(&fine, &tail).sqrt());
        }
        rows.push(QuasiRow {
            ec: s.cutoff,
            basis_size: coarse.len(),
            gamma_err,
            best_err,
            ratio,
            orbital_err,
            orbital_best,
            orbital_ratio: orbital_err / orbital_best,
        });
    }

    let finite: Vec<&QuasiRow> = rows.iter().filter(|r| r.ratio.is_finite()).collect();
    let max_ratio = finite.iter().map(|r| r.ratio).fold(f64::NAN, f64::max);
    let trend_slope = if finite.len() >= 2 {
        let x: Vec<f64> = finite.iter().map(|r| r.ec).collect();
        let y: Vec<f64> = finite.iter().map(|r| r.ratio).collect();
        linear_fit(&x, &y).slope
    } else {
        0.0
    };
    let orbital_constant = rows
        .iter()
        .map(|r| r.orbital_ratio)
        .filter(|r| r.is_finite())
        .fold(f64::NAN, f64::max);
    Ok(QuasiReport {
        beta,
        reference_cutoff: reference.cutoff,
        bounded: finite.iter().all(|r| r.ratio <= config.quasi_bound),
        non_increasing: trend_slope <= 0.0,
        rows,
        max_ratio,
        orbital_constant,
        bound: config.quasi_bound,
        trend_slope,
    })
}
