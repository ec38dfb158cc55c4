//! Run configuration: TOML text with one section per concern.
//!
//! ```toml
//! name = "si1d"
//! seed = 7
//!
//! [cell]
//! dimension = 1
//! length = 10.0            # cubic cell; or `lattice = [[...], ...]`
//!
//! [basis]
//! cutoff = 20.0
//! cutoffs = [10, 15, 20, 25, 30]
//! reference = 80.0
//!
//! [electrons]
//! count = 3
//! beta = 100.0
//! temperatures = [10, 100, 1000]
//!
//! [potential]
//! kind = "gaussian_wells"
//! [[potential.wells]]
//! center = [1.7]
//! depth = 3.0
//! width = 0.6
//! ```
//!
//! Required keys: `cell.dimension`, `cell.length` or `cell.lattice`,
//! `basis.cutoff`, `electrons.count`, `electrons.beta`, `potential.kind`.
//! Everything else has a default.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use mks_core::cell_basis::{Cell, PlaneWaveBasis};
use mks_core::potentials::{
    CosineTerm, ExternalPotential, GaussianWell, Interactions, XcFunctional, DIRAC_COEFFICIENT,
};
use mks_core::scf::{EigensolverKind, Mixing, ScfOptions, ScfProblem};
use mks_core::smearing::{GSign, Smearing};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XcChoice {
    None,
    Dirac,
    DiracWigner,
}

/// Which truncation `Π_n` the quasi-optimality check divides by.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionKind {
    /// Plain `P_n Γ P_n`.
    Plain,
    /// Truncation followed by symmetric re-orthonormalisation.
    Lowdin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub dimension: usize,
    pub lattice: Vec<Vec<f64>>,
    pub cutoff: f64,
    pub cutoffs: Vec<f64>,
    pub reference: Option<f64>,
    pub n_electrons: f64,
    pub beta: f64,
    /// Inverse temperatures for multi-temperature experiments.
    pub temperatures: Vec<f64>,
    pub potential: ExternalPotential,
    pub hartree: bool,
    pub xc: XcChoice,
    pub xc_coefficient: f64,
    pub scf: ScfOptions,
    pub g_sign: GSign,
    pub response_tol: f64,
    pub response_samples: usize,
    pub quasi_bound: f64,
    pub projection: ProjectionKind,
    pub out_dir: PathBuf,
    /// 0 = no cap beyond `MKS_THREADS`.
    pub workers: usize,
    /// When false the `wall_s` column is written as 0 so outputs are
    /// byte-for-byte reproducible.
    pub wall_clock: bool,
}

struct Reader<'a> {
    root: &'a Table,
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

impl<'a> Reader<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        let mut parts = key.split('.');
        let mut cur = self.root.get(parts.next()?)?;
        for p in parts {
            cur = cur.as_table()?.get(p)?;
        }
        Some(cur)
    }

    fn require(&self, key: &str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| HarnessError::MissingKey(key.to_string()))
    }

    fn f64_of(key: &str, v: &Value) -> Result<f64> {
        match v {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            other => Err(HarnessError::invalid(
                key,
                format!("must be a number, found {}", type_name(other)),
            )),
        }
    }

    fn f64_req(&self, key: &str) -> Result<f64> {
        Self::f64_of(key, self.require(key)?)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| Self::f64_of(key, v))
    }

    fn usize_of(key: &str, v: &Value) -> Result<usize> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            other => Err(HarnessError::invalid(
                key,
                format!("must be a non-negative integer, found {other}"),
            )),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        self.get(key).map_or(Ok(default), |v| Self::usize_of(key, v))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(other) => Err(HarnessError::invalid(
                key,
                format!("must be a boolean, found {}", type_name(other)),
            )),
        }
    }

    fn str_or(&self, key: &str, default: &str) -> Result<String> {
        match self.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(HarnessError::invalid(
                key,
                format!("must be a string, found {}", type_name(other)),
            )),
        }
    }

    fn str_req(&self, key: &str) -> Result<String> {
        match self.require(key)? {
            Value::String(s) => Ok(s.clone()),
            other => Err(HarnessError::invalid(
                key,
                format!("must be a string, found {}", type_name(other)),
            )),
        }
    }

    fn f64_list_of(key: &str, v: &Value) -> Result<Vec<f64>> {
        match v {
            Value::Array(a) => a.iter().map(|x| Self::f64_of(key, x)).collect(),
            other => Err(HarnessError::invalid(
                key,
                format!("must be an array of numbers, found {}", type_name(other)),
            )),
        }
    }

    fn f64_list_or(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| Self::f64_list_of(key, v)).transpose()
    }

    fn tables(&self, key: &str) -> Result<Vec<&'a Table>> {
        match self.require(key)? {
            Value::Array(a) => a
                .iter()
                .map(|x| {
                    x.as_table()
                        .ok_or_else(|| HarnessError::invalid(key, "entries must be tables"))
                })
                .collect(),
            other => Err(HarnessError::invalid(
                key,
                format!("must be an array of tables, found {}", type_name(other)),
            )),
        }
    }
}

fn pad3(key: &str, v: &[f64], dim: usize) -> Result<[f64; 3]> {
    if v.len() != dim {
        return Err(HarnessError::invalid(
            key,
            format!("needs {dim} components, found {}", v.len()),
        ));
    }
    let mut out = [0.0; 3];
    out[..dim].copy_from_slice(v);
    Ok(out)
}

fn positive(key: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(HarnessError::invalid(key, format!("must be positive, found {x}")))
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Parse { message, .. } => HarnessError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Parse {
            path: PathBuf::from("<string>"),
            message: e.message().to_string(),
        })?;
        let r = Reader { root: &root };

        let dimension = match r.require("cell.dimension")? {
            Value::Integer(d @ 1..=3) => *d as usize,
            other => return Err(HarnessError::invalid("cell.dimension", format!("must be 1, 2 or 3, found {other}"))),
        };
        let lattice = match (r.get("cell.length"), r.get("cell.lattice")) {
            (Some(v), None) => {
                let l = positive("cell.length", Reader::f64_of("cell.length", v)?)?;
                (0..dimension)
                    .map(|i| (0..dimension).map(|j| if i == j { l } else { 0.0 }).collect())
                    .collect()
            }
            (None, Some(Value::Array(rows))) => rows
                .iter()
                .map(|row| Reader::f64_list_of("cell.lattice", row))
                .collect::<Result<Vec<_>>>()?,
            (None, Some(_)) => return Err(HarnessError::invalid("cell.lattice", "must be an array of rows")),
            (Some(_), Some(_)) => {
                return Err(HarnessError::invalid("cell.lattice", "conflicts with cell.length"))
            }
            (None, None) => return Err(HarnessError::MissingKey("cell.length".into())),
        };

        let cutoff = positive("basis.cutoff", r.f64_req("basis.cutoff")?)?;
        let cutoffs = r.f64_list_or("basis.cutoffs")?.unwrap_or_else(|| vec![cutoff]);
        let reference = r.get("basis.reference").map(|v| Reader::f64_of("basis.reference", v)).transpose()?;

        let n_electrons = positive("electrons.count", r.f64_req("electrons.count")?)?;
        let beta = positive("electrons.beta", r.f64_req("electrons.beta")?)?;
        let temperatures = r.f64_list_or("electrons.temperatures")?.unwrap_or_else(|| vec![beta]);

        let kind = r.str_req("potential.kind")?;
        let potential = match kind.as_str() {
            "zero" => ExternalPotential::Zero,
            "gaussian_wells" => {
                let mut wells = Vec::new();
                for t in r.tables("potential.wells")? {
                    let sub = Reader { root: t };
                    let center = sub
                        .f64_list_or("center")?
                        .ok_or_else(|| HarnessError::MissingKey("potential.wells.center".into()))?;
                    wells.push(GaussianWell {
                        center: pad3("potential.wells.center", &center, dimension)?,
                        depth: sub.get("depth").map_or(
                            Err(HarnessError::MissingKey("potential.wells.depth".into())),
                            |v| Reader::f64_of("potential.wells.depth", v),
                        )?,
                        width: positive(
                            "potential.wells.width",
                            sub.get("width").map_or(
                                Err(HarnessError::MissingKey("potential.wells.width".into())),
                                |v| Reader::f64_of("potential.wells.width", v),
                            )?,
                        )?,
                    });
                }
                ExternalPotential::GaussianWells(wells)
            }
            "cosine" => {
                let mut terms = Vec::new();
                for t in r.tables("potential.terms")? {
                    let key = "potential.terms.harmonic";
                    let h = match t.get("harmonic") {
                        Some(Value::Array(a)) => a
                            .iter()
                            .map(|x| match x {
                                Value::Integer(i) => Ok(*i as i32),
                                _ => Err(HarnessError::invalid(key, "must contain integers")),
                            })
                            .collect::<Result<Vec<i32>>>()?,
                        Some(_) => return Err(HarnessError::invalid(key, "must be an array")),
                        None => return Err(HarnessError::MissingKey(key.into())),
                    };
                    if h.len() != dimension {
                        return Err(HarnessError::invalid(key, format!("needs {dimension} components")));
                    }
                    let mut harmonic = [0; 3];
                    harmonic[..dimension].copy_from_slice(&h);
                    let amplitude = t.get("amplitude").map_or(
                        Err(HarnessError::MissingKey("potential.terms.amplitude".into())),
                        |v| Reader::f64_of("potential.terms.amplitude", v),
                    )?;
                    terms.push(CosineTerm { harmonic, amplitude });
                }
                ExternalPotential::CosineSeries(terms)
            }
            other => {
                return Err(HarnessError::invalid(
                    "potential.kind",
                    format!("unknown kind `{other}` (zero, gaussian_wells, cosine)"),
                ))
            }
        };

        let hartree = r.bool_or("interactions.hartree", true)?;
        let xc = match r.str_or("interactions.xc", "dirac")?.as_str() {
            "none" => XcChoice::None,
            "dirac" => XcChoice::Dirac,
            "dirac_wigner" => XcChoice::DiracWigner,
            other => {
                return Err(HarnessError::invalid(
                    "interactions.xc",
                    format!("unknown functional `{other}` (none, dirac, dirac_wigner)"),
                ))
            }
        };
        let xc_coefficient = r.f64_or("interactions.xc_coefficient", DIRAC_COEFFICIENT)?;

        let alpha = r.f64_or("scf.alpha", 0.5)?;
        let mixing = match r.str_or("scf.mixing", "simple")?.as_str() {
            "simple" => Mixing::Simple { alpha },
            "anderson" => Mixing::Anderson {
                alpha,
                window: r.usize_or("scf.window", 5)?,
            },
            other => {
                return Err(HarnessError::invalid(
                    "scf.mixing",
                    format!("unknown scheme `{other}` (simple, anderson)"),
                ))
            }
        };
        let eigensolver = match r.str_or("scf.eigensolver", "auto")?.as_str() {
            "auto" => EigensolverKind::Auto,
            "dense" => EigensolverKind::Dense,
            "lobpcg" => EigensolverKind::Lobpcg,
            other => {
                return Err(HarnessError::invalid(
                    "scf.eigensolver",
                    format!("unknown eigensolver `{other}` (auto, dense, lobpcg)"),
                ))
            }
        };
        let defaults = ScfOptions::default();
        let scf = ScfOptions {
            mixing,
            tol_rho: r.f64_or("scf.tol_rho", defaults.tol_rho)?,
            tol_f: r.f64_or("scf.tol_f", defaults.tol_f)?,
            max_iterations: r.usize_or("scf.max_iterations", defaults.max_iterations)?,
            buffer: r.usize_or("scf.buffer", defaults.buffer)?,
            eigensolver,
        };
        scf.validate().map_err(|e| HarnessError::invalid("scf", e.to_string()))?;

        let g_sign = match r.str_or("response.g_sign", "paper")?.as_str() {
            "paper" => GSign::Paper,
            "analytic" => GSign::Analytic,
            other => {
                return Err(HarnessError::invalid(
                    "response.g_sign",
                    format!("unknown convention `{other}` (paper, analytic)"),
                ))
            }
        };
        let projection = match r.str_or("quasi_opt.projection", "plain")?.as_str() {
            "plain" => ProjectionKind::Plain,
            "lowdin" => ProjectionKind::Lowdin,
            other => {
                return Err(HarnessError::invalid(
                    "quasi_opt.projection",
                    format!("unknown projection `{other}` (plain, lowdin)"),
                ))
            }
        };

        let config = RunConfig {
            name: r.str_or("name", "run")?,
            seed: r.usize_or("seed", 0)? as u64,
            dimension,
            lattice,
            cutoff,
            cutoffs,
            reference,
            n_electrons,
            beta,
            temperatures,
            potential,
            hartree,
            xc,
            xc_coefficient,
            scf,
            g_sign,
            response_tol: positive("response.tol", r.f64_or("response.tol", 1e-8)?)?,
            response_samples: r.usize_or("response.samples", 3)?,
            quasi_bound: positive("quasi_opt.bound", r.f64_or("quasi_opt.bound", 50.0)?)?,
            projection,
            out_dir: PathBuf::from(r.str_or("output.dir", "out")?),
            workers: r.usize_or("output.workers", 0)?,
            wall_clock: r.bool_or("output.wall_clock", true)?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Physical consistency beyond per-key parsing.
    pub fn validate(&self) -> Result<()> {
        let cell = self.cell()?;
        self.potential
            .validate()
            .map_err(|e| HarnessError::invalid("potential", e.to_string()))?;
        for &b in &self.temperatures {
            positive("electrons.temperatures", b)?;
        }
        if self.cutoffs.is_empty() {
            return Err(HarnessError::invalid("basis.cutoffs", "must not be empty"));
        }
        for w in self.cutoffs.windows(2) {
            if w[1] <= w[0] {
                return Err(HarnessError::invalid("basis.cutoffs", "must be strictly increasing"));
            }
        }
        let smallest = self.cutoffs[0].min(self.cutoff);
        positive("basis.cutoffs", smallest)?;
        let size = PlaneWaveBasis::build(&cell, smallest, None)
            .map_err(|e| HarnessError::invalid("basis.cutoffs", e.to_string()))?
            .len();
        if self.n_electrons >= size as f64 {
            return Err(HarnessError::invalid(
                "electrons.count",
                format!("{} electrons do not fit into {size} plane waves at cutoff {smallest}", self.n_electrons),
            ));
        }
        if let Some(r) = self.reference {
            let top = self.cutoffs.iter().copied().fold(f64::MIN, f64::max);
            if r < 2.0 * top {
                return Err(HarnessError::invalid(
                    "basis.reference",
                    format!("must be at least twice the largest swept cutoff ({top}), found {r}"),
                ));
            }
        }
        Ok(())
    }

    pub fn cell(&self) -> Result<Cell> {
        Cell::new(self.dimension, &self.lattice).map_err(|e| HarnessError::invalid("cell", e.to_string()))
    }

    pub fn interactions(&self) -> Interactions {
        Interactions {
            hartree: self.hartree,
            xc: match self.xc {
                XcChoice::None => None,
                XcChoice::Dirac => Some(XcFunctional::dirac(self.xc_coefficient)),
                XcChoice::DiracWigner => Some(XcFunctional::dirac_wigner(self.xc_coefficient)),
            },
        }
    }

    /// Reference cutoff: configured, or twice the largest swept cutoff.
    pub fn reference_cutoff(&self) -> f64 {
        self.reference
            .unwrap_or_else(|| 2.0 * self.cutoffs.iter().copied().fold(f64::MIN, f64::max))
    }

    pub fn basis(&self, cutoff: f64, grid: Option<[usize; 3]>) -> Result<Arc<PlaneWaveBasis>> {
        Ok(Arc::new(PlaneWaveBasis::build(&self.cell()?, cutoff, grid)?))
    }

    pub fn problem_on(&self, basis: Arc<PlaneWaveBasis>, beta: f64, scf: ScfOptions) -> Result<ScfProblem> {
        Ok(ScfProblem::new(
            basis,
            self.n_electrons,
            Smearing::new(beta)?,
            &self.potential,
            self.interactions(),
            scf,
        )?)
    }

    /// The problem at the single configured cutoff and temperature.
    pub fn problem(&self) -> Result<ScfProblem> {
        self.problem_on(self.basis(self.cutoff, None)?, self.beta, self.scf)
    }

    pub fn with_cutoffs(mut self, cutoffs: Vec<f64>) -> Result<Self> {
        self.cutoffs = cutoffs;
        self.validate()?;
        Ok(self)
    }

    pub fn with_reference(mut self, reference: f64) -> Result<Self> {
        self.reference = Some(reference);
        self.validate()?;
        Ok(self)
    }

    /// SHA-256 of the fully resolved configuration. Output location, worker
    /// count and timing do not change the numbers and are left out.
    pub fn hash(&self) -> String {
        let mut physics = self.clone();
        physics.out_dir = PathBuf::new();
        physics.workers = 0;
        physics.wall_clock = false;
        let digest = Sha256::digest(format!("{physics:?}").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `MKS_THREADS`, then the configured worker count; 0 means unlimited.
pub fn worker_cap(configured: usize) -> usize {
    let env = std::env::var("MKS_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(0);
    match (env, configured) {
        (0, c) => c,
        (e, 0) => e,
        (e, c) => e.min(c),
    }
}

/// Comma-separated cutoff list from the command line.
pub fn parse_cutoffs(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::invalid("--cutoffs", format!("`{s}` is not a number")))
        })
        .collect()
}
