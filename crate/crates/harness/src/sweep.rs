//! Cutoff sweeps against a fine-cutoff reference.

use std::sync::Arc;
use std::time::Instant;

use mks_core::cell_basis::{l2_norm, PlaneWaveBasis};
use mks_core::density_matrix::{project_dm, project_dm_plain, s11_distance, LowRankOperator};
use mks_core::linalg::orthonormality_error;
use mks_core::response::{A4Report, ResponseContext};
use mks_core::scf::{run_scf, ScfOptions, ScfProblem, ScfState};
use serde::Serialize;

use crate::config::{worker_cap, ProjectionKind, RunConfig};
use crate::error::{HarnessError, Result};
use crate::fit::{fit_decay, DecayFit};
use crate::parallel_map;

/// Projection errors below this make the quasi-optimality ratio meaningless.
pub const RATIO_FLOOR: f64 = 1e-13;
/// The reference is converged this much tighter than the swept points.
pub const REFERENCE_TIGHTENING: f64 = 10.0;

/// One CSV row; the column order is part of the output contract.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub ec: f64,
    pub f_total: f64,
    pub f_err: f64,
    pub rho_l2_err: f64,
    pub gamma_s11_err: f64,
    pub proj_err: f64,
    pub ratio: f64,
    pub scf_iters: usize,
    pub wall_s: f64,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub row: SweepRow,
    pub basis_size: usize,
    pub residual_fixedpoint: f64,
    pub trace_error: f64,
    pub orthonormality: f64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub config_hash: String,
    pub beta: f64,
    pub reference_cutoff: f64,
    pub reference_size: usize,
    pub reference_free_energy: f64,
    pub points: Vec<SweepPoint>,
    pub energy_fit: Option<DecayFit>,
    pub density_fit: Option<DecayFit>,
    /// Largest finite quasi-optimality ratio.
    pub max_ratio: f64,
    pub a4: A4Report,
    pub tol_rho: f64,
    pub tol_f: f64,
}

/// Solved problem at one cutoff.
#[derive(Clone, Debug)]
pub struct Solved {
    pub cutoff: f64,
    pub problem: ScfProblem,
    pub state: ScfState,
    pub wall_s: f64,
}

/// SCF at one cutoff; non-convergence is an error naming the cutoff.
pub fn solve_at(config: &RunConfig, basis: Arc<PlaneWaveBasis>, beta: f64, opts: ScfOptions) -> Result<Solved> {
    let cutoff = basis.cutoff();
    let at = |source| HarnessError::AtCutoff { cutoff, source };
    let problem = config.problem_on(basis, beta, opts)?;
    // no clock is read unless asked for; wasm32 has none
    let start = config.wall_clock.then(Instant::now);
    let state = run_scf(&problem).map_err(at)?;
    let wall_s = start.map_or(0.0, |t| t.elapsed().as_secs_f64());
    if !state.converged {
        return Err(HarnessError::NotConverged {
            cutoff,
            iterations: state.iterations,
            residual: state.residual_density,
        });
    }
    Ok(Solved {
        cutoff,
        problem,
        state,
        wall_s,
    })
}

pub fn reference_options(opts: ScfOptions) -> ScfOptions {
    ScfOptions {
        tol_rho: opts.tol_rho / REFERENCE_TIGHTENING,
        tol_f: opts.tol_f / REFERENCE_TIGHTENING,
        ..opts
    }
}

/// Reference plus every swept cutoff, all on the reference FFT grid so the
/// discretisations are nested.
pub fn solve_ladder(config: &RunConfig, beta: f64) -> Result<(Solved, Vec<Solved>)> {
    let reference = config.reference_cutoff();
    let top = config.cutoffs.iter().copied().fold(f64::MIN, f64::max);
    if reference < 2.0 * top {
        return Err(HarnessError::invalid(
            "basis.reference",
            format!("must be at least twice the largest swept cutoff ({top}), found {reference}"),
        ));
    }
    let ref_basis = config.basis(reference, None)?;
    let grid = ref_basis.fft_grid();
    let mut jobs = vec![(ref_basis, reference_options(config.scf))];
    for &ec in &config.cutoffs {
        jobs.push((config.basis(ec, Some(grid))?, config.scf));
    }
    let mut solved = parallel_map(&jobs, worker_cap(config.workers), |(b, o)| {
        solve_at(config, b.clone(), beta, *o)
    })
    .into_iter();
    let reference = solved.next().expect("reference job")?;
    let swept = solved.collect::<Result<Vec<_>>>()?;
    Ok((reference, swept))
}

/// `Π_n Γ_ref` as an operator on the reference basis.
pub fn projected_reference(
    reference: &ScfState,
    coarse: &Arc<PlaneWaveBasis>,
    kind: ProjectionKind,
) -> Result<LowRankOperator> {
    let fine = reference.gamma.basis();
    let p = match kind {
        ProjectionKind::Plain => project_dm_plain(&reference.gamma, coarse)?,
        ProjectionKind::Lowdin => project_dm(&reference.gamma, coarse)?.to_operator(),
    };
    Ok(p.embed(fine)?)
}

fn compare(point: &Solved, reference: &Solved, kind: ProjectionKind) -> Result<SweepPoint> {
    let (s, r) = (&point.state, &reference.state);
    let fine = r.gamma.basis();
    let f_total = s.free_energy.total;
    let rho_err = l2_norm(&s.rho.sub(&r.rho)?);
    let gamma_ref = r.gamma.to_operator();
    let gamma_err = s11_distance(&s.gamma.to_operator().embed(fine)?, &gamma_ref)?;
    let proj_err = s11_distance(&projected_reference(r, s.gamma.basis(), kind)?, &gamma_ref)?;
    let ratio = if proj_err > RATIO_FLOOR {
        gamma_err / proj_err
    } else {
        f64::NAN
    };
    Ok(SweepPoint {
        row: SweepRow {
            ec: point.cutoff,
            f_total,
            f_err: (f_total - r.free_energy.total).abs(),
            rho_l2_err: rho_err,
            gamma_s11_err: gamma_err,
            proj_err,
            ratio,
            scf_iters: s.iterations,
            wall_s: point.wall_s,
        },
        basis_size: s.gamma.basis().len(),
        residual_fixedpoint: s.residual_fixedpoint,
        trace_error: s.trace_error,
        orthonormality: orthonormality_error(s.gamma.orbitals()),
    })
}

pub fn run_sweep(config: &RunConfig) -> Result<SweepResult> {
    run_sweep_at(config, config.beta)
}

pub fn run_sweep_at(config: &RunConfig, beta: f64) -> Result<SweepResult> {
    if config.cutoffs.len() < 4 {
        return Err(HarnessError::invalid(
            "basis.cutoffs",
            format!("a sweep needs at least 4 cutoffs, found {}", config.cutoffs.len()),
        ));
    }
    let (reference, swept) = solve_ladder(config, beta)?;
    let points = swept
        .iter()
        .map(|p| compare(p, &reference, config.projection))
        .collect::<Result<Vec<_>>>()?;
    let opts = config.scf;
    let energy: Vec<(f64, f64)> = points.iter().map(|p| (p.row.ec, p.row.f_err)).collect();
    let density: Vec<(f64, f64)> = points.iter().map(|p| (p.row.ec, p.row.rho_l2_err)).collect();
    let ctx = ResponseContext::new(&reference.problem, &reference.state, config.g_sign, config.response_tol)?;
    Ok(SweepResult {
        config_hash: config.hash(),
        beta,
        reference_cutoff: reference.cutoff,
        reference_size: reference.problem.basis.len(),
        reference_free_energy: reference.state.free_energy.total,
        energy_fit: fit_decay(&energy, 10.0 * opts.tol_f).ok(),
        density_fit: fit_decay(&density, 10.0 * opts.tol_rho).ok(),
        max_ratio: points
            .iter()
            .map(|p| p.row.ratio)
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::max),
        a4: ctx.audit_a4(),
        points,
        tol_rho: opts.tol_rho,
        tol_f: opts.tol_f,
    })
}

/// Violations of the expected monotone behaviour along a sweep.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonotonicityReport {
    pub energy_error: Vec<f64>,
    pub density_error: Vec<f64>,
    pub gamma_error: Vec<f64>,
    /// Cutoffs where `F` increased.
    pub free_energy: Vec<f64>,
    /// Cutoffs where `F` fell below the reference.
    pub below_reference: Vec<f64>,
}

impl MonotonicityReport {
    pub fn is_clean(&self) -> bool {
        self.energy_error.is_empty()
            && self.density_error.is_empty()
            && self.gamma_error.is_empty()
            && self.free_energy.is_empty()
            && self.below_reference.is_empty()
    }
}

fn increases(rows: &[SweepRow], value: impl Fn(&SweepRow) -> f64, slack: f64) -> Vec<f64> {
    rows.windows(2)
        .filter(|w| value(&w[1]) > value(&w[0]) + slack)
        .map(|w| w[1].ec)
        .collect()
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.points.iter().map(|p| p.row).collect()
    }

    /// Errors and free energies nonincreasing in the cutoff, up to the
    /// floors `10·tol_ρ` and `10·tol_F`; free energies approach the
    /// reference from above.
    pub fn monotonicity(&self) -> MonotonicityReport {
        let rows = self.rows();
        let (fr, ff) = (10.0 * self.tol_rho, 10.0 * self.tol_f);
        MonotonicityReport {
            energy_error: increases(&rows, |r| r.f_err, ff),
            density_error: increases(&rows, |r| r.rho_l2_err, fr),
            gamma_error: increases(&rows, |r| r.gamma_s11_err, fr),
            free_energy: increases(&rows, |r| r.f_total, ff),
            below_reference: rows
                .iter()
                .filter(|r| r.f_total < self.reference_free_energy - ff)
                .map(|r| r.ec)
                .collect(),
        }
    }
}
