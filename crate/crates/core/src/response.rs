//! Linear response `χ`, the Jacobian of the optimality map and its block
//! solve, and the A4 stability audit.
//!
//! Everything lives on the span of the retained eigenpairs of `H(ρ̄)`; a
//! tangent `Ψ` is an `m × m` matrix in that frame. The contour integral
//! defining `χ` collapses to the divided-difference double sum
//! `(χΨ)_ij = D(λ_i, λ_j) ⟨φ_i| δv[ρ_Ψ] |φ_j⟩`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::cell_basis::{to_grid, GridFunction};
use crate::linalg::{frobenius, hermitian_eigen, hermiticity_error};
use crate::potentials::xc_kernel;
use crate::scf::{lowest_eigenpairs_from, ScfProblem, ScfState};
use crate::smearing::{divided_difference, fermi_dirac, g_mu, GSign};
use crate::{Error, Result, C64};

const HERMITICITY_TOL: f64 = 1e-12;
const REFINEMENT_TOL: f64 = 1e-10;
/// Relative pivot size below which `χ - I` is treated as singular.
const PIVOT_TOL: f64 = 1e-13;

/// A tangent direction `(Ψ, s)`, or an element of the dual written the same way.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentPerturbation {
    pub psi: DMatrix<C64>,
    pub s: f64,
}

impl TangentPerturbation {
    pub fn new(psi: DMatrix<C64>, s: f64) -> Self {
        Self { psi, s }
    }
}

/// Frozen data at a converged state `(Γ̄, μ̄)`.
#[derive(Clone, Debug)]
pub struct ResponseContext {
    problem: ScfProblem,
    rho_bar: GridFunction,
    mu: f64,
    sign: GSign,
    eigenvalues: Vec<f64>,
    occupations: Vec<f64>,
    orbitals: DMatrix<C64>,
    /// Orbital values on the FFT grid, one vector per orbital.
    orbital_grid: Vec<Vec<C64>>,
    kernel_xc: Option<Vec<f64>>,
    divided: DMatrix<f64>,
    g: Vec<f64>,
}

impl ResponseContext {
    /// Requires `state.residual_fixedpoint ≤ tol`.
    pub fn new(problem: &ScfProblem, state: &ScfState, sign: GSign, tol: f64) -> Result<Self> {
        if !(state.residual_fixedpoint <= tol) {
            return Err(Error::NotConverged(state.residual_fixedpoint));
        }
        let m = state.gamma.len();
        let h = problem.hamiltonian(&state.rho)?;
        let pairs = lowest_eigenpairs_from(
            &h,
            m,
            problem.options.eigensolver,
            Some(state.gamma.orbitals()),
        )?;
        Self::from_parts(problem, state.rho.clone(), state.mu, sign, pairs.values, pairs.vectors)
    }

    fn from_parts(
        problem: &ScfProblem,
        rho_bar: GridFunction,
        mu: f64,
        sign: GSign,
        eigenvalues: Vec<f64>,
        orbitals: DMatrix<C64>,
    ) -> Result<Self> {
        let s = problem.smearing;
        let m = eigenvalues.len();
        let occupations = eigenvalues.iter().map(|&l| fermi_dirac(l, mu, s)).collect();
        let basis = &problem.basis;
        let orbital_grid = orbitals
            .column_iter()
            .map(|c| {
                let v: Vec<C64> = c.iter().copied().collect();
                to_grid(basis, &v).map(|g| g.into_values())
            })
            .collect::<Result<Vec<_>>>()?;
        let kernel_xc = match &problem.interactions.xc {
            Some(f) => Some(xc_kernel(&rho_bar, f)?),
            None => None,
        };
        let divided = DMatrix::from_fn(m, m, |i, j| {
            divided_difference(eigenvalues[i], eigenvalues[j], mu, s)
        });
        let g = eigenvalues.iter().map(|&l| g_mu(l, mu, s, sign)).collect();
        Ok(Self {
            problem: problem.clone(),
            rho_bar,
            mu,
            sign,
            eigenvalues,
            occupations,
            orbitals,
            orbital_grid,
            kernel_xc,
            divided,
            g,
        })
    }

    pub fn problem(&self) -> &ScfProblem {
        &self.problem
    }

    pub fn rho_bar(&self) -> &GridFunction {
        &self.rho_bar
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn g_sign(&self) -> GSign {
        self.sign
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn occupations(&self) -> &[f64] {
        &self.occupations
    }

    /// Retained eigenvectors of `H(ρ̄)` as coefficient columns.
    pub fn orbitals(&self) -> &DMatrix<C64> {
        &self.orbitals
    }

    /// Number of retained states `m`.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Real dimension of the Hermitian tangent space, `m²`.
    pub fn tangent_dim(&self) -> usize {
        self.len() * self.len()
    }

    /// `D(λ_i, λ_j)`.
    pub fn divided_differences(&self) -> &DMatrix<f64> {
        &self.divided
    }

    /// `g_μ(H)` in the eigenframe (diagonal).
    pub fn g_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.len(),
            self.g.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    /// `ρ_Ψ(x) = Σ_ij Ψ_ij φ_i(x) conj(φ_j(x))`.
    pub fn tangent_density(&self, psi: &DMatrix<C64>) -> GridFunction {
        let n = self.problem.basis.grid_len();
        let mut rho = vec![C64::new(0.0, 0.0); n];
        for (i, phi_i) in self.orbital_grid.iter().enumerate() {
            for (j, phi_j) in self.orbital_grid.iter().enumerate() {
                let c = psi[(i, j)];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                for ((r, a), b) in rho.iter_mut().zip(phi_i).zip(phi_j) {
                    *r += c * a * b.conj();
                }
            }
        }
        GridFunction::new(self.problem.basis.clone(), rho).expect("grid length")
    }

    /// `δv = K ρ + e''(ρ̄) ρ`, complex-linear in `ρ`.
    fn kernel_apply(&self, rho: &GridFunction) -> Vec<C64> {
        let basis = rho.basis().clone();
        let mut out = vec![C64::new(0.0, 0.0); basis.grid_len()];
        if self.problem.interactions.hartree {
            let mut coeffs = rho.fourier();
            for (c, &g2) in coeffs.iter_mut().zip(basis.grid_g2()) {
                *c *= if g2 > 0.0 { 4.0 * PI / g2 } else { 0.0 };
            }
            let v = GridFunction::from_fourier(basis, coeffs).expect("grid length");
            out.copy_from_slice(v.values());
        }
        if let Some(k) = &self.kernel_xc {
            for ((o, r), k) in out.iter_mut().zip(rho.values()).zip(k) {
                *o += r * k;
            }
        }
        out
    }

    /// `⟨φ_i| v |φ_j⟩` by grid quadrature.
    fn matrix_elements(&self, v: &[C64]) -> DMatrix<C64> {
        let m = self.len();
        let w = self.problem.basis.grid_weight();
        let vphi: Vec<Vec<C64>> = self
            .orbital_grid
            .iter()
            .map(|phi| phi.iter().zip(v).map(|(p, x)| p * x).collect())
            .collect();
        DMatrix::from_fn(m, m, |i, j| {
            self.orbital_grid[i]
                .iter()
                .zip(&vphi[j])
                .map(|(a, b)| a.conj() * b)
                .sum::<C64>()
                * w
        })
    }

    /// `ℒΨ = ⟨φ_i| δv[ρ_Ψ] |φ_j⟩`.
    pub fn apply_kernel(&self, psi: &DMatrix<C64>) -> DMatrix<C64> {
        if self.problem.interactions.is_noninteracting() {
            return DMatrix::zeros(self.len(), self.len());
        }
        let rho = self.tangent_density(psi);
        let dv = self.kernel_apply(&rho);
        self.matrix_elements(&dv)
    }

    fn check_shape(&self, psi: &DMatrix<C64>) -> Result<()> {
        if psi.nrows() != self.len() || psi.ncols() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: psi.nrows().max(psi.ncols()),
            });
        }
        Ok(())
    }

    fn check_hermitian(&self, psi: &DMatrix<C64>) -> Result<()> {
        self.check_shape(psi)?;
        let err = hermiticity_error(psi);
        if err > HERMITICITY_TOL * (1.0 + frobenius(psi)) {
            return Err(Error::NotHermitian(err));
        }
        Ok(())
    }

    fn chi_unchecked(&self, psi: &DMatrix<C64>) -> DMatrix<C64> {
        let v = self.apply_kernel(psi);
        v.zip_map(&self.divided, |x, d| x * d)
    }

    /// `(χΨ)_ij = D(λ_i, λ_j) ⟨φ_i| δv[ρ_Ψ] |φ_j⟩`.
    pub fn apply_chi(&self, psi: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        self.check_hermitian(psi)?;
        Ok(self.chi_unchecked(psi))
    }

    /// The duality pairing `⟨χΨ, Ψ⟩ = Σ_ij D_ij |⟨φ_i|δv[ρ_Ψ]|φ_j⟩|²`.
    ///
    /// `χΨ` is paired with `Ψ` through the potential it generates, which is
    /// the form in which the non-positivity of `χ` holds without
    /// exchange-correlation.
    pub fn chi_pairing(&self, psi: &DMatrix<C64>) -> Result<f64> {
        self.check_hermitian(psi)?;
        let v = self.apply_kernel(psi);
        let chi = v.zip_map(&self.divided, |x, d| x * d);
        Ok(v.iter().zip(chi.iter()).map(|(a, b)| (a.conj() * b).re).sum())
    }

    fn jacobian_unchecked(&self, tp: &TangentPerturbation) -> TangentPerturbation {
        let mut first = self.chi_unchecked(&tp.psi) - &tp.psi;
        for (i, g) in self.g.iter().enumerate() {
            first[(i, i)] += tp.s * g;
        }
        TangentPerturbation {
            psi: first,
            s: tp.psi.trace().re,
        }
    }

    /// `𝒥(Ψ, s) = (χΨ - Ψ + s g_μ(H), Tr Ψ)`.
    pub fn apply_jacobian(&self, tp: &TangentPerturbation) -> Result<TangentPerturbation> {
        self.check_hermitian(&tp.psi)?;
        Ok(self.jacobian_unchecked(tp))
    }

    /// Dense `ℒ` on the complexified tangent space, columns indexed by
    /// `(k, l) ↦ k·m + l` for the elementary matrices `E_kl`.
    pub fn kernel_matrix(&self) -> DMatrix<C64> {
        let m = self.len();
        let dim = m * m;
        if self.problem.interactions.is_noninteracting() {
            return DMatrix::zeros(dim, dim);
        }
        let basis = &self.problem.basis;
        let n = basis.grid_len();
        // pair products P_kl = φ_k conj(φ_l)
        let mut pairs = DMatrix::<C64>::zeros(n, dim);
        for k in 0..m {
            for l in 0..m {
                let mut col = pairs.column_mut(k * m + l);
                for (x, (a, b)) in col
                    .iter_mut()
                    .zip(self.orbital_grid[k].iter().zip(&self.orbital_grid[l]))
                {
                    *x = a * b.conj();
                }
            }
        }
        let w = basis.grid_weight();
        let mut l_mat = DMatrix::<C64>::zeros(dim, dim);
        if self.problem.interactions.hartree {
            let mut hat = DMatrix::<C64>::zeros(n, dim);
            for c in 0..dim {
                let g = GridFunction::new(basis.clone(), pairs.column(c).iter().copied().collect())
                    .expect("grid length");
                hat.column_mut(c).copy_from_slice(&g.fourier());
            }
            let mut weighted = hat.clone();
            for (r, &g2) in basis.grid_g2().iter().enumerate() {
                let k = if g2 > 0.0 { 4.0 * PI / g2 } else { 0.0 };
                weighted.row_mut(r).iter_mut().for_each(|x| *x *= k);
            }
            l_mat += hat.adjoint() * weighted;
        }
        if let Some(kern) = &self.kernel_xc {
            let mut weighted = pairs.clone();
            for (r, &k) in kern.iter().enumerate() {
                weighted.row_mut(r).iter_mut().for_each(|x| *x *= k * w);
            }
            l_mat += pairs.adjoint() * weighted;
        }
        l_mat
    }

    /// Dense `χ - I` on the complexified tangent space.
    pub fn chi_minus_identity(&self) -> DMatrix<C64> {
        let m = self.len();
        let mut a = self.kernel_matrix();
        for r in 0..m * m {
            let d = self.divided[(r / m, r % m)];
            a.row_mut(r).iter_mut().for_each(|x| *x *= d);
            a[(r, r)] -= 1.0;
        }
        a
    }

    /// Factorises `χ - I` once for repeated solves.
    pub fn jacobian_solver(&self) -> Result<JacobianSolver<'_>> {
        let a = self.chi_minus_identity();
        let lu = a.clone().lu();
        let u = lu.u();
        let diag: Vec<f64> = u.diagonal().iter().map(|x| x.norm()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > PIVOT_TOL * max.max(1.0)) {
            let sv = a.singular_values();
            let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
            return Err(Error::SingularResponse(smallest));
        }
        let m = self.len();
        let gvec = vectorize(&self.g_matrix());
        let y_g = lu.solve(&gvec).ok_or(Error::SingularResponse(0.0))?;
        let denominator = (0..m).map(|i| y_g[i * m + i]).sum::<C64>().re;
        Ok(JacobianSolver {
            ctx: self,
            lu,
            y_g,
            denominator,
        })
    }

    /// `(Ψ, s)` with `𝒥(Ψ, s) = (Φ, t)`.
    pub fn solve_jacobian(&self, rhs: &TangentPerturbation) -> Result<TangentPerturbation> {
        self.jacobian_solver()?.solve(rhs)
    }

    /// Symmetrised spectrum of `I - χ` on the tangent space.
    pub fn audit_a4(&self) -> A4Report {
        let m = self.len();
        let dim = m * m;
        let mut a = self.kernel_matrix();
        let root: Vec<f64> = (0..dim)
            .map(|r| self.divided[(r / m, r % m)].abs().sqrt())
            .collect();
        for r in 0..dim {
            for c in 0..dim {
                a[(r, c)] *= root[r] * root[c];
            }
            a[(r, r)] += 1.0;
        }
        let (values, _) = hermitian_eigen(&a);
        let lambda_min = values.first().copied().unwrap_or(1.0);
        let lambda_max = values.last().copied().unwrap_or(1.0);
        let positive = lambda_min > 0.0;
        let kappa = if positive { 1.0 / lambda_min } else { f64::INFINITY };
        let denominator_s = self
            .jacobian_solver()
            .map(|s| s.denominator())
            .unwrap_or(f64::NAN);
        A4Report {
            lambda_min,
            lambda_max,
            kappa,
            condition: if positive { lambda_max / lambda_min } else { f64::INFINITY },
            denominator_s,
            g_sign: self.sign,
            tangent_dim: dim,
            positive,
        }
    }
}

fn vectorize(m: &DMatrix<C64>) -> DVector<C64> {
    let n = m.nrows();
    DVector::from_fn(n * m.ncols(), |r, _| m[(r / n, r % n)])
}

fn unvectorize(v: &DVector<C64>, n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |i, j| v[i * n + j])
}

/// Cached factorisation of `χ - I` and the solution `(χ - I)⁻¹ g_μ(H)`.
pub struct JacobianSolver<'a> {
    ctx: &'a ResponseContext,
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    y_g: DVector<C64>,
    denominator: f64,
}

impl JacobianSolver<'_> {
    /// `Tr((χ - I)⁻¹ g_μ(H))`, the denominator of `s`.
    pub fn denominator(&self) -> f64 {
        self.denominator
    }

    fn solve_once(&self, rhs: &TangentPerturbation) -> Result<TangentPerturbation> {
        let m = self.ctx.len();
        if self.denominator.abs() < f64::EPSILON * self.y_g.norm().max(1.0) {
            return Err(Error::ZeroDenominator(self.denominator));
        }
        let y_phi = self
            .lu
            .solve(&vectorize(&rhs.psi))
            .ok_or(Error::SingularResponse(0.0))?;
        let tr_phi = (0..m).map(|i| y_phi[i * m + i]).sum::<C64>().re;
        let s = (tr_phi - rhs.s) / self.denominator;
        let psi = unvectorize(&(y_phi - &self.y_g * C64::new(s, 0.0)), m);
        Ok(TangentPerturbation { psi, s })
    }

    /// `s = (Tr((χ-I)⁻¹Φ) - t) / Tr((χ-I)⁻¹g)`, `Ψ = (χ-I)⁻¹(Φ - s g)`, with
    /// iterative refinement against the matrix-free Jacobian.
    pub fn solve(&self, rhs: &TangentPerturbation) -> Result<TangentPerturbation> {
        self.ctx.check_hermitian(&rhs.psi)?;
        let mut sol = self.solve_once(rhs)?;
        let scale = 1.0 + frobenius(&rhs.psi) + rhs.s.abs();
        for _ in 0..3 {
            let image = self.ctx.jacobian_unchecked(&sol);
            let r = TangentPerturbation {
                psi: &rhs.psi - image.psi,
                s: rhs.s - image.s,
            };
            if frobenius(&r.psi) + r.s.abs() <= REFINEMENT_TOL * scale {
                break;
            }
            let corr = self.solve_once(&r)?;
            sol.psi += corr.psi;
            sol.s += corr.s;
        }
        // the exact solution of a Hermitian right-hand side is Hermitian
        sol.psi = (&sol.psi + sol.psi.adjoint()) * C64::new(0.5, 0.0);
        Ok(sol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct A4Report {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `1/λ_min`, infinite when the assumption fails.
    pub kappa: f64,
    pub condition: f64,
    pub denominator_s: f64,
    pub g_sign: GSign,
    pub tangent_dim: usize,
    pub positive: bool,
}
