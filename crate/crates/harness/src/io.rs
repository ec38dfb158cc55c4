//! CSV tables, JSON summaries and checkpoints.
//!
//! Sweep CSV columns, in order:
//!
//! | column          | meaning                                              |
//! |-----------------|------------------------------------------------------|
//! | `ec`            | energy cutoff (hartree)                              |
//! | `f_total`       | converged free energy                                |
//! | `f_err`         | `|F_n - F_ref|`                                      |
//! | `rho_l2_err`    | `‖ρ_n - ρ_ref‖_{L²}`                                 |
//! | `gamma_s11_err` | `‖Γ_n - Γ_ref‖_{𝔖¹,¹}`                              |
//! | `proj_err`      | `‖Π_nΓ_ref - Γ_ref‖_{𝔖¹,¹}`                         |
//! | `ratio`         | `gamma_s11_err / proj_err` (`NaN` when undefined)    |
//! | `scf_iters`     | SCF iterations                                       |
//! | `wall_s`        | wall time of the SCF (0 with `output.wall_clock = false`) |

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use mks_core::cell_basis::{Cell, PlaneWaveBasis};
use mks_core::density_matrix::DensityMatrix;
use mks_core::scf::{IterationRecord, ScfState};
use mks_core::C64;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::checks::A4Summary;
use crate::error::{HarnessError, Result};
use crate::fit::DecayFit;
use crate::quasi::QuasiReport;
use crate::sweep::{SweepResult, SweepRow};

pub const SWEEP_COLUMNS: [&str; 9] = [
    "ec",
    "f_total",
    "f_err",
    "rho_l2_err",
    "gamma_s11_err",
    "proj_err",
    "ratio",
    "scf_iters",
    "wall_s",
];

/// The JSON schema the sweep summary conforms to.
pub const SUMMARY_SCHEMA: &str = include_str!("../schema/summary.schema.json");

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
    }
    File::create(path).map_err(|e| HarnessError::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    #[derive(Deserialize)]
    struct Raw {
        ec: f64,
        f_total: f64,
        f_err: f64,
        rho_l2_err: f64,
        gamma_s11_err: f64,
        proj_err: f64,
        ratio: f64,
        scf_iters: usize,
        wall_s: f64,
    }
    let mut r = csv::Reader::from_reader(File::open(path).map_err(|e| HarnessError::io(path, e))?);
    r.deserialize::<Raw>()
        .map(|row| {
            let x = row?;
            Ok(SweepRow {
                ec: x.ec,
                f_total: x.f_total,
                f_err: x.f_err,
                rho_l2_err: x.rho_l2_err,
                gamma_s11_err: x.gamma_s11_err,
                proj_err: x.proj_err,
                ratio: x.ratio,
                scf_iters: x.scf_iters,
                wall_s: x.wall_s,
            })
        })
        .collect()
}

pub fn write_quasi_csv(path: &Path, report: &QuasiReport) -> Result<()> {
    write_rows(path, &report.rows)
}

/// Per-iteration SCF log: `iteration, free_energy, delta_rho, mu`.
pub fn write_scf_log(path: &Path, log: &[IterationRecord]) -> Result<()> {
    #[derive(Serialize)]
    struct Line {
        iteration: usize,
        free_energy: f64,
        delta_rho: f64,
        mu: f64,
    }
    let lines: Vec<Line> = log
        .iter()
        .map(|r| Line {
            iteration: r.iteration,
            free_energy: r.free_energy,
            delta_rho: r.delta_rho,
            mu: r.mu,
        })
        .collect();
    write_rows(path, &lines)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
}

impl FitSummary {
    fn from_fit(fit: Option<&DecayFit>) -> Self {
        match fit {
            Some(f) => Self {
                model: serde_json::to_value(f.model)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                slope: Some(f.slope),
                intercept: Some(f.intercept),
                r2: Some(f.r2),
            },
            None => Self {
                model: "none".into(),
                slope: None,
                intercept: None,
                r2: None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A4Brief {
    pub lambda_min: f64,
    pub kappa: f64,
}

/// Machine-readable sweep summary; the energy-error fit is flattened into
/// the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub model: String,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
    pub max_ratio: Option<f64>,
    pub a4: A4Brief,
    pub beta: f64,
    pub reference_cutoff: f64,
    pub density_fit: FitSummary,
}

pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl SweepSummary {
    pub fn new(result: &SweepResult) -> Self {
        let energy = FitSummary::from_fit(result.energy_fit.as_ref());
        Self {
            config_hash: result.config_hash.clone(),
            model: energy.model,
            slope: energy.slope,
            intercept: energy.intercept,
            r2: energy.r2,
            max_ratio: finite(result.max_ratio),
            a4: A4Brief {
                lambda_min: result.a4.lambda_min,
                kappa: result.a4.kappa,
            },
            beta: result.beta,
            reference_cutoff: result.reference_cutoff,
            density_fit: FitSummary::from_fit(result.density_fit.as_ref()),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    use std::io::Write;
    f.write_all(b"\n").map_err(|e| HarnessError::io(path, e))
}

pub fn a4_json(a4: &A4Summary) -> serde_json::Value {
    serde_json::to_value(a4).expect("plain data")
}

/// Orbital coefficients as little-endian `f64` pairs `(re, im)`,
/// column-major, base64 encoded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub encoding: String,
    pub data: String,
}

const ENCODING: &str = "base64-f64le-re-im-colmajor";

impl EncodedMatrix {
    pub fn encode(m: &DMatrix<C64>) -> Self {
        let mut bytes = Vec::with_capacity(16 * m.len());
        for z in m.iter() {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            encoding: ENCODING.into(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<DMatrix<C64>> {
        let bad = |msg: &str| HarnessError::Check(format!("checkpoint orbitals: {msg}"));
        if self.encoding != ENCODING {
            return Err(bad("unknown encoding"));
        }
        let bytes = STANDARD.decode(&self.data).map_err(|e| bad(&e.to_string()))?;
        if bytes.len() != 16 * self.rows * self.cols {
            return Err(bad("length does not match the shape"));
        }
        let values = bytes.chunks_exact(16).map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        });
        Ok(DMatrix::from_iterator(self.rows, self.cols, values))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub dimension: usize,
    pub lattice: Vec<Vec<f64>>,
    pub cutoff: f64,
    pub fft_grid: [usize; 3],
    pub size: usize,
}

/// Converged SCF state: JSON metadata with the orbital block in base64.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub basis: BasisDescriptor,
    pub n_electrons: f64,
    pub beta: f64,
    pub mu: f64,
    pub free_energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub occupations: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub orbitals: EncodedMatrix,
}

impl Checkpoint {
    pub fn new(state: &ScfState, lattice: &[Vec<f64>], n_electrons: f64, beta: f64) -> Self {
        let b = state.gamma.basis();
        Self {
            format: "mks-checkpoint".into(),
            version: 1,
            basis: BasisDescriptor {
                dimension: b.cell().dimension(),
                lattice: lattice.to_vec(),
                cutoff: b.cutoff(),
                fft_grid: b.fft_grid(),
                size: b.len(),
            },
            n_electrons,
            beta,
            mu: state.mu,
            free_energy: state.free_energy.total,
            converged: state.converged,
            iterations: state.iterations,
            occupations: state.gamma.occupations().to_vec(),
            eigenvalues: state.gamma.eigenvalues().map(<[f64]>::to_vec).unwrap_or_default(),
            orbitals: EncodedMatrix::encode(state.gamma.orbitals()),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }

    /// Rebuilds the basis from the descriptor and the density matrix on it.
    pub fn density_matrix(&self) -> Result<DensityMatrix> {
        let d = &self.basis;
        let cell = Cell::new(d.dimension, &d.lattice)?;
        let basis = Arc::new(PlaneWaveBasis::build(&cell, d.cutoff, Some(d.fft_grid))?);
        if basis.len() != d.size {
            return Err(HarnessError::Check(format!(
                "checkpoint basis has {} plane waves, rebuilt basis has {}",
                d.size,
                basis.len()
            )));
        }
        let gamma = DensityMatrix::new(basis, self.orbitals.decode()?, self.occupations.clone())?;
        Ok(if self.eigenvalues.is_empty() {
            gamma
        } else {
            gamma.with_eigenvalues(self.eigenvalues.clone())?
        })
    }
}
