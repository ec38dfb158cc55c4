//! Hamiltonian application, eigensolvers, the fixed-point map
//! `ρ ↦ ρ[f_μ(H(ρ))]` and the SCF driver.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cell_basis::{from_grid, to_grid, GridFunction, PlaneWaveBasis};
use crate::density_matrix::{
    free_energy_with_density, DensityMatrix, FreeEnergyBreakdown, OCCUPATION_FLOOR,
};
use crate::linalg::{frobenius, hermitian_eigen, lowdin};
use crate::potentials::{assemble_effective, ExternalPotential, Interactions};
use crate::smearing::{fermi_dirac, solve_mu, Smearing};
use crate::{Error, Result, C64};

/// Bases up to this size are diagonalised densely.
pub const DENSE_LIMIT: usize = 512;
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;
const LOBPCG_MAX_ITERATIONS: usize = 1000;

/// `H = -½Δ + v_local` on a plane-wave basis.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    basis: Arc<PlaneWaveBasis>,
    v_local: GridFunction,
    kinetic: Vec<f64>,
}

impl Hamiltonian {
    pub fn new(basis: Arc<PlaneWaveBasis>, v_local: GridFunction) -> Result<Self> {
        if basis.cell() != v_local.basis().cell() || basis.fft_grid() != v_local.basis().fft_grid() {
            return Err(Error::IncompatibleBasis(
                "potential does not live on the basis grid".into(),
            ));
        }
        let kinetic = basis.kinetic_diagonal();
        Ok(Self {
            basis,
            v_local,
            kinetic,
        })
    }

    pub fn basis(&self) -> &Arc<PlaneWaveBasis> {
        &self.basis
    }

    pub fn v_local(&self) -> &GridFunction {
        &self.v_local
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Kinetic part diagonally in reciprocal space, the local potential
    /// pointwise on the grid.
    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let mut u = to_grid(&self.basis, psi).expect("vector length equals basis size");
        for (x, v) in u.values_mut().iter_mut().zip(self.v_local.values()) {
            *x *= v.re;
        }
        let mut out = from_grid(&u);
        for ((o, c), t) in out.iter_mut().zip(psi).zip(&self.kinetic) {
            *o += c * t;
        }
        out
    }

    pub fn apply_block(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (k, col) in x.column_iter().enumerate() {
            let v: Vec<C64> = col.iter().copied().collect();
            out.column_mut(k).copy_from_slice(&self.apply(&v));
        }
        out
    }

    /// `H_{GG'} = ½|G|² δ_{GG'} + |Ω|^{-1/2} v̂(G - G')`.
    pub fn dense_matrix(&self) -> DMatrix<C64> {
        let n = self.basis.len();
        let vhat = self.v_local.fourier();
        let scale = self.basis.cell().volume().powf(-0.5);
        let [n0, n1, n2] = self.basis.fft_grid();
        let wrap = |m: i32, n: usize| m.rem_euclid(n as i32) as usize;
        let g = self.basis.g_vectors();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let d = [
                    g[i].coords[0] - g[j].coords[0],
                    g[i].coords[1] - g[j].coords[1],
                    g[i].coords[2] - g[j].coords[2],
                ];
                let flat = (wrap(d[0], n0) * n1 + wrap(d[1], n1)) * n2 + wrap(d[2], n2);
                h[(i, j)] = vhat[flat] * scale;
            }
            h[(i, i)] += self.kinetic[i];
        }
        h
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EigensolverKind {
    /// Dense up to [`DENSE_LIMIT`] basis functions, LOBPCG above.
    #[default]
    Auto,
    Dense,
    Lobpcg,
}

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
    pub residuals: Vec<f64>,
}

fn residual_norms(h: &Hamiltonian, values: &[f64], vectors: &DMatrix<C64>, hx: &DMatrix<C64>) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(k, &l)| (hx.column(k) - vectors.column(k) * C64::new(l, 0.0)).norm())
        .take(h.len())
        .collect()
}

/// The `m` lowest eigenpairs, ascending.
pub fn lowest_eigenpairs(h: &Hamiltonian, m: usize, kind: EigensolverKind) -> Result<Eigenpairs> {
    lowest_eigenpairs_from(h, m, kind, None)
}

/// As [`lowest_eigenpairs`], optionally warm-starting the iterative solver.
pub fn lowest_eigenpairs_from(
    h: &Hamiltonian,
    m: usize,
    kind: EigensolverKind,
    guess: Option<&DMatrix<C64>>,
) -> Result<Eigenpairs> {
    let n = h.len();
    if m > n {
        return Err(Error::TooManyEigenpairs {
            requested: m,
            size: n,
        });
    }
    let dense = match kind {
        EigensolverKind::Dense => true,
        EigensolverKind::Lobpcg => false,
        EigensolverKind::Auto => n <= DENSE_LIMIT,
    };
    // a block that is a sizeable fraction of the basis gains nothing from
    // iterating
    if dense || 3 * (m + 4) >= n {
        let (values, vectors) = hermitian_eigen(&h.dense_matrix());
        let vectors = vectors.columns(0, m).into_owned();
        let values = values[..m].to_vec();
        let hx = h.apply_block(&vectors);
        let residuals = residual_norms(h, &values, &vectors, &hx);
        return Ok(Eigenpairs {
            values,
            vectors,
            residuals,
        });
    }
    lobpcg(h, m, guess)
}

/// Orthonormal columns spanning `extra` orthogonalised against the
/// orthonormal block `x`; nearly dependent directions are dropped.
fn orthonormal_complement(x: &DMatrix<C64>, extra: &DMatrix<C64>) -> DMatrix<C64> {
    let mut e = extra.clone();
    for _ in 0..2 {
        e -= x * (x.adjoint() * &e);
    }
    let keep: Vec<usize> = (0..e.ncols()).filter(|&k| e.column(k).norm() > 1e-14).collect();
    let mut e = e.select_columns(keep.iter());
    if e.ncols() == 0 {
        return e;
    }
    for mut col in e.column_iter_mut() {
        let n = col.norm();
        col /= C64::new(n, 0.0);
    }
    let svd = e.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-10)
        .collect();
    let mut q = u.select_columns(keep.iter());
    q -= x * (x.adjoint() * &q);
    lowdin(&q).unwrap_or(q)
}

/// Block LOBPCG with a kinetic-diagonal preconditioner.
fn lobpcg(h: &Hamiltonian, m: usize, guess: Option<&DMatrix<C64>>) -> Result<Eigenpairs> {
    let n = h.len();
    let block = (m + (m / 4).max(2)).min(n);
    let kinetic = h.basis().kinetic_diagonal();
    let mut x = DMatrix::<C64>::zeros(n, block);
    let filled = match guess {
        Some(g) if g.nrows() == n => {
            let k = g.ncols().min(block);
            x.columns_mut(0, k).copy_from(&g.columns(0, k));
            k
        }
        _ => 0,
    };
    // fill the rest with the lowest-kinetic plane waves plus a fixed,
    // deterministic perturbation that breaks symmetry
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| kinetic[a].total_cmp(&kinetic[b]));
    for (c, col) in (filled..block).enumerate() {
        x[(order[c % n], col)] += C64::new(1.0, 0.0);
        for r in 0..n {
            let phase = ((r * 7919 + col * 104729) % 1009) as f64;
            x[(r, col)] += C64::new((phase * 0.37).sin(), (phase * 0.61).cos()) * (1e-3 / (1.0 + kinetic[r]));
        }
    }
    let mut x = orthonormal_complement(&DMatrix::zeros(n, 0), &x);
    if x.ncols() < block {
        return Err(Error::EigensolverNotConverged {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    let mut hx = h.apply_block(&x);
    let small = x.adjoint() * &hx;
    let (mut values, rot) = hermitian_eigen(&small);
    x = &x * &rot;
    hx = &hx * &rot;
    let mut p: Option<DMatrix<C64>> = None;
    let mut worst = f64::INFINITY;
    for _ in 0..LOBPCG_MAX_ITERATIONS {
        let mut r = &hx - &x * DMatrix::from_diagonal(&DVector::from_iterator(
            block,
            values.iter().map(|&l| C64::new(l, 0.0)),
        ));
        let norms: Vec<f64> = r.column_iter().map(|c| c.norm()).collect();
        worst = norms[..m].iter().copied().fold(0.0, f64::max);
        if worst <= 0.1 * EIGEN_RESIDUAL_TOL {
            let vectors = x.columns(0, m).into_owned();
            let values = values[..m].to_vec();
            let hv = h.apply_block(&vectors);
            let residuals = residual_norms(h, &values, &vectors, &hv);
            if residuals.iter().all(|&r| r <= EIGEN_RESIDUAL_TOL) {
                return Ok(Eigenpairs {
                    values,
                    vectors,
                    residuals,
                });
            }
        }
        for (row, t) in kinetic.iter().enumerate() {
            let pre = 1.0 / (1.0 + t);
            r.row_mut(row).iter_mut().for_each(|z| *z *= pre);
        }
        // only keep residual directions of unconverged vectors
        let active: Vec<usize> = (0..block).filter(|&k| norms[k] > 0.01 * EIGEN_RESIDUAL_TOL).collect();
        let w = r.select_columns(active.iter());
        let mut cols = w.ncols();
        if let Some(p) = &p {
            cols += p.ncols();
        }
        let mut extra = DMatrix::zeros(n, cols);
        extra.columns_mut(0, w.ncols()).copy_from(&w);
        if let Some(p) = &p {
            extra.columns_mut(w.ncols(), p.ncols()).copy_from(p);
        }
        let ext = orthonormal_complement(&x, &extra);
        if ext.ncols() == 0 {
            break;
        }
        let mut q = DMatrix::zeros(n, block + ext.ncols());
        q.columns_mut(0, block).copy_from(&x);
        q.columns_mut(block, ext.ncols()).copy_from(&ext);
        let hq = h.apply_block(&q);
        let small = q.adjoint() * &hq;
        let (v, rot) = hermitian_eigen(&small);
        let rot = rot.columns(0, block).into_owned();
        let x_new = &q * &rot;
        // implicit search direction: the part of the update outside span(X)
        let overlap = x.adjoint() * &x_new;
        p = Some(&x_new - &x * overlap);
        x = x_new;
        hx = &hq * &rot;
        values = v[..block].to_vec();
    }
    Err(Error::EigensolverNotConverged {
        iterations: LOBPCG_MAX_ITERATIONS,
        residual: worst,
    })
}

/// Density mixing scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mixing {
    /// `ρ ← (1-α)ρ + α ρ_out`.
    Simple { alpha: f64 },
    /// Anderson acceleration over the last `window` residuals.
    Anderson { alpha: f64, window: usize },
}

impl Mixing {
    pub fn alpha(&self) -> f64 {
        match *self {
            Mixing::Simple { alpha } | Mixing::Anderson { alpha, .. } => alpha,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScfOptions {
    pub mixing: Mixing,
    pub tol_rho: f64,
    pub tol_f: f64,
    pub max_iterations: usize,
    /// Extra near-empty states kept beyond those with `f > 1e-12`.
    pub buffer: usize,
    pub eigensolver: EigensolverKind,
}

impl Default for ScfOptions {
    fn default() -> Self {
        Self {
            mixing: Mixing::Simple { alpha: 0.5 },
            tol_rho: 1e-8,
            tol_f: 1e-10,
            max_iterations: 200,
            buffer: 8,
            eigensolver: EigensolverKind::Auto,
        }
    }
}

impl ScfOptions {
    pub fn validate(&self) -> Result<()> {
        let alpha = self.mixing.alpha();
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mixing alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if let Mixing::Anderson { window: 0, .. } = self.mixing {
            return Err(Error::InvalidParameter("anderson window must be positive".into()));
        }
        if !(self.tol_rho > 0.0 && self.tol_f > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be positive".into()));
        }
        if self.buffer == 0 {
            return Err(Error::InvalidParameter("buffer must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything that defines one discrete MKS problem.
#[derive(Clone, Debug)]
pub struct ScfProblem {
    pub basis: Arc<PlaneWaveBasis>,
    pub n_electrons: f64,
    pub smearing: Smearing,
    pub vext: GridFunction,
    pub interactions: Interactions,
    pub options: ScfOptions,
}

impl ScfProblem {
    pub fn new(
        basis: Arc<PlaneWaveBasis>,
        n_electrons: f64,
        smearing: Smearing,
        external: &ExternalPotential,
        interactions: Interactions,
        options: ScfOptions,
    ) -> Result<Self> {
        external.validate()?;
        options.validate()?;
        if !(n_electrons > 0.0 && n_electrons < basis.len() as f64) {
            return Err(Error::InfeasibleElectronCount {
                n: n_electrons,
                levels: basis.len(),
            });
        }
        let vext = external.on_grid(&basis);
        Ok(Self {
            basis,
            n_electrons,
            smearing,
            vext,
            interactions,
            options,
        })
    }

    /// Same physics with different options.
    pub fn with_options(&self, options: ScfOptions) -> Result<Self> {
        options.validate()?;
        Ok(Self {
            options,
            ..self.clone()
        })
    }

    pub fn uniform_density(&self) -> GridFunction {
        GridFunction::constant(self.basis.clone(), self.n_electrons / self.basis.cell().volume())
    }

    pub fn hamiltonian(&self, rho: &GridFunction) -> Result<Hamiltonian> {
        let v = assemble_effective(rho, &self.vext, &self.interactions)?.total();
        Hamiltonian::new(self.basis.clone(), v)
    }

    pub fn free_energy(&self, gamma: &DensityMatrix) -> Result<FreeEnergyBreakdown> {
        let rho = gamma.density();
        free_energy_with_density(gamma, &rho, &self.vext, &self.interactions, self.smearing)
    }
}

/// Grows the number of computed eigenpairs until the first uncomputed
/// state would carry an occupation below the floor. With `mu = None` the
/// chemical potential is re-solved from each partial spectrum.
fn occupied_spectrum(
    problem: &ScfProblem,
    h: &Hamiltonian,
    mu: Option<f64>,
    guess: Option<&DMatrix<C64>>,
) -> Result<(Eigenpairs, f64)> {
    let n = h.len();
    let s = problem.smearing;
    let buffer = problem.options.buffer;
    if problem.n_electrons >= n as f64 {
        return Err(Error::InfeasibleElectronCount {
            n: problem.n_electrons,
            levels: n,
        });
    }
    let mut m = ((problem.n_electrons.ceil() as usize) + buffer).min(n);
    loop {
        let pairs = lowest_eigenpairs_from(h, m, problem.options.eigensolver, guess)?;
        let mu = match mu {
            Some(mu) => mu,
            None => solve_mu(&pairs.values, problem.n_electrons, s)?,
        };
        let top = *pairs.values.last().unwrap();
        if m == n || fermi_dirac(top, mu, s) < OCCUPATION_FLOOR {
            return Ok((pairs, mu));
        }
        m = (m + buffer.max(m / 2)).min(n);
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointOutput {
    pub gamma: DensityMatrix,
    pub mu: f64,
    pub rho: GridFunction,
}

/// One application of `ρ ↦ ρ[f_μ(H(ρ))]` with `μ` fixed by `Tr Γ = N`.
pub fn fixed_point_map(problem: &ScfProblem, rho_in: &GridFunction) -> Result<FixedPointOutput> {
    fixed_point_map_from(problem, rho_in, None)
}

fn fixed_point_map_from(
    problem: &ScfProblem,
    rho_in: &GridFunction,
    guess: Option<&DMatrix<C64>>,
) -> Result<FixedPointOutput> {
    let h = problem.hamiltonian(rho_in)?;
    let (pairs, mu) = occupied_spectrum(problem, &h, None, guess)?;
    let s = problem.smearing;
    // keep states with f > floor plus the buffer, then fix μ on exactly the
    // retained spectrum so the trace constraint holds for the stored Γ
    let occupied = pairs
        .values
        .iter()
        .filter(|&&l| fermi_dirac(l, mu, s) > OCCUPATION_FLOOR)
        .count();
    let keep = (occupied + problem.options.buffer).min(pairs.values.len());
    let values = pairs.values[..keep].to_vec();
    let mu = solve_mu(&values, problem.n_electrons, s)?;
    let occupations = values.iter().map(|&l| fermi_dirac(l, mu, s)).collect();
    let orbitals = pairs.vectors.columns(0, keep).into_owned();
    let gamma = DensityMatrix::new(problem.basis.clone(), orbitals, occupations)?.with_eigenvalues(values)?;
    let rho = gamma.density();
    Ok(FixedPointOutput { gamma, mu, rho })
}

/// `Φ* f_μ(H(ρ)) Φ` for the orbital frame `Φ`.
pub fn occupation_operator_in_frame(
    problem: &ScfProblem,
    rho: &GridFunction,
    mu: f64,
    frame: &DMatrix<C64>,
) -> Result<DMatrix<C64>> {
    let h = problem.hamiltonian(rho)?;
    let (pairs, _) = occupied_spectrum(problem, &h, Some(mu), Some(frame))?;
    let overlap = pairs.vectors.adjoint() * frame;
    let f = DVector::from_iterator(
        pairs.values.len(),
        pairs
            .values
            .iter()
            .map(|&l| C64::new(fermi_dirac(l, mu, problem.smearing), 0.0)),
    );
    Ok(overlap.adjoint() * DMatrix::from_diagonal(&f) * overlap)
}

/// `‖Φ* f_μ(H(ρ_Γ)) Φ - diag(f)‖_F` in the frame of `Γ`.
pub fn fixed_point_residual(problem: &ScfProblem, gamma: &DensityMatrix, mu: f64) -> Result<f64> {
    let rho = gamma.density();
    let mut m = occupation_operator_in_frame(problem, &rho, mu, gamma.orbitals())?;
    for (i, &f) in gamma.occupations().iter().enumerate() {
        m[(i, i)] -= f;
    }
    Ok(frobenius(&m))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub free_energy: f64,
    pub delta_rho: f64,
    pub mu: f64,
}

/// One SCF iterate together with both optimality residuals.
#[derive(Clone, Debug)]
pub struct ScfState {
    pub gamma: DensityMatrix,
    pub mu: f64,
    pub rho: GridFunction,
    pub free_energy: FreeEnergyBreakdown,
    /// `‖ρ_out - ρ_in‖_{L²}` of the last step.
    pub residual_density: f64,
    /// `‖f_μ(H(ρ_Γ)) - Γ‖` in the retained frame.
    pub residual_fixedpoint: f64,
    /// `|Tr Γ - N|`.
    pub trace_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<IterationRecord>,
}

fn l2_distance(a: &GridFunction, b: &GridFunction) -> f64 {
    let w = a.basis().grid_weight();
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
        * w.sqrt()
}

struct Anderson {
    window: usize,
    inputs: Vec<Vec<f64>>,
    residuals: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(window: usize) -> Self {
        Self {
            window,
            inputs: Vec::new(),
            residuals: Vec::new(),
        }
    }

    fn next(&mut self, x: Vec<f64>, r: Vec<f64>, alpha: f64) -> Vec<f64> {
        self.inputs.push(x);
        self.residuals.push(r);
        if self.inputs.len() > self.window + 1 {
            self.inputs.remove(0);
            self.residuals.remove(0);
        }
        let k = self.inputs.len() - 1;
        let (xk, rk) = (&self.inputs[k], &self.residuals[k]);
        let simple: Vec<f64> = xk.iter().zip(rk).map(|(x, r)| x + alpha * r).collect();
        if k == 0 {
            return simple;
        }
        let len = xk.len();
        let dr = DMatrix::from_fn(len, k, |i, j| self.residuals[j + 1][i] - self.residuals[j][i]);
        let dx = DMatrix::from_fn(len, k, |i, j| self.inputs[j + 1][i] - self.inputs[j][i]);
        let gamma = match dr.clone().svd(true, true).solve(&DVector::from_column_slice(rk), 1e-12) {
            Ok(g) => g,
            Err(_) => return simple,
        };
        let correction = (&dx + &dr * alpha) * gamma;
        simple.iter().zip(correction.iter()).map(|(s, c)| s - c).collect()
    }
}

/// SCF from the uniform density `N/|Ω|`.
pub fn run_scf(problem: &ScfProblem) -> Result<ScfState> {
    run_scf_from(problem, problem.uniform_density())
}

/// SCF from a given starting density. Exceeding the iteration cap is not an
/// error: the best iterate is returned with `converged = false`.
pub fn run_scf_from(problem: &ScfProblem, rho0: GridFunction) -> Result<ScfState> {
    let opts = problem.options;
    let basis = problem.basis.clone();
    if !rho0.same_grid(&problem.vext) {
        return Err(Error::IncompatibleBasis(
            "initial density does not live on the problem grid".into(),
        ));
    }
    let alpha = opts.mixing.alpha();
    let mut anderson = match opts.mixing {
        Mixing::Anderson { window, .. } => Some(Anderson::new(window)),
        Mixing::Simple { .. } => None,
    };
    let mut rho = rho0;
    let mut previous_f: Option<f64> = None;
    let mut log = Vec::new();
    let mut guess: Option<DMatrix<C64>> = None;
    let mut best: Option<(f64, FixedPointOutput, FreeEnergyBreakdown, usize)> = None;
    for iteration in 1..=opts.max_iterations {
        let out = fixed_point_map_from(problem, &rho, guess.as_ref())?;
        let delta = l2_distance(&out.rho, &rho);
        let f = free_energy_with_density(
            &out.gamma,
            &out.rho,
            &problem.vext,
            &problem.interactions,
            problem.smearing,
        )?;
        log.push(IterationRecord {
            iteration,
            free_energy: f.total,
            delta_rho: delta,
            mu: out.mu,
        });
        let done = delta <= opts.tol_rho
            && previous_f.is_some_and(|p| (f.total - p).abs() <= opts.tol_f);
        if done {
            return finish(problem, out, f, delta, iteration, true, log);
        }
        previous_f = Some(f.total);
        guess = Some(out.gamma.orbitals().clone());

        let next = if problem.interactions.is_noninteracting() {
            // the map ignores its input, so its output is already the fixed point
            out.rho.real_values()
        } else {
            let x = rho.real_values();
            let r: Vec<f64> = out
                .rho
                .values()
                .iter()
                .zip(&x)
                .map(|(o, i)| o.re - i)
                .collect();
            let simple: Vec<f64> = x.iter().zip(&r).map(|(x, r)| x + alpha * r).collect();
            match anderson.as_mut() {
                Some(a) => {
                    let mixed = a.next(x, r, alpha);
                    if mixed.iter().all(|&v| v >= 0.0) {
                        mixed
                    } else {
                        simple
                    }
                }
                None => simple,
            }
        };
        rho = GridFunction::from_real(basis.clone(), &next)?;
        if best.as_ref().is_none_or(|b| delta < b.0) {
            best = Some((delta, out, f, iteration));
        }
    }
    let (delta, out, f, _) = best.expect("at least one iteration");
    finish(problem, out, f, delta, opts.max_iterations, false, log)
}

fn finish(
    problem: &ScfProblem,
    out: FixedPointOutput,
    f: FreeEnergyBreakdown,
    delta: f64,
    iterations: usize,
    converged: bool,
    log: Vec<IterationRecord>,
) -> Result<ScfState> {
    let residual_fixedpoint = fixed_point_residual(problem, &out.gamma, out.mu)?;
    let trace_error = (out.gamma.trace() - problem.n_electrons).abs();
    Ok(ScfState {
        gamma: out.gamma,
        mu: out.mu,
        rho: out.rho,
        free_energy: f,
        residual_density: delta,
        residual_fixedpoint,
        trace_error,
        iterations,
        converged,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_basis::{build_basis, Cell};
    use std::f64::consts::PI;

    #[test]
    fn free_lowest_three() {
        let b = Arc::new(build_basis(&Cell::cubic(1, 2.0 * PI).unwrap(), 4.0).unwrap());
        let h = Hamiltonian::new(b.clone(), GridFunction::zeros(b)).unwrap();
        let p = lowest_eigenpairs(&h, 3, EigensolverKind::Dense).unwrap();
        assert!((p.values[0]).abs() < 1e-14);
        assert!((p.values[1] - 0.5).abs() < 1e-14);
        assert!((p.values[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn too_many_eigenpairs() {
        let b = Arc::new(build_basis(&Cell::cubic(1, 2.0 * PI).unwrap(), 0.6).unwrap());
        let h = Hamiltonian::new(b.clone(), GridFunction::zeros(b)).unwrap();
        assert!(matches!(
            lowest_eigenpairs(&h, 4, EigensolverKind::Dense),
            Err(Error::TooManyEigenpairs { .. })
        ));
    }

    #[test]
    fn anderson_reduces_to_simple_mixing_on_first_step() {
        let mut a = Anderson::new(3);
        let next = a.next(vec![1.0, 2.0], vec![0.5, -0.5], 0.4);
        assert_eq!(next, vec![1.2, 1.8]);
    }
}
