//! Density matrices `Γ = Σ f_i |φ_i⟩⟨φ_i|` stored in spectral form.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::cell_basis::{to_grid, GridFunction, PlaneWaveBasis};
use crate::linalg::{hermitian_eigen, lowdin, low_rank_trace_norm, orthonormality_error};
use crate::potentials::{assemble_effective, Interactions};
use crate::scf::Hamiltonian;
use crate::smearing::{entropy, Smearing};
use crate::{Error, Result, C64};

pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Occupations at or below this count as empty.
pub const OCCUPATION_FLOOR: f64 = 1e-12;
/// Projected norm below which an orbital counts as annihilated.
const ANNIHILATION_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    basis: Arc<PlaneWaveBasis>,
    orbitals: DMatrix<C64>,
    occupations: Vec<f64>,
    eigenvalues: Option<Vec<f64>>,
}

impl DensityMatrix {
    /// `orbitals` holds one coefficient column per orbital.
    pub fn new(
        basis: Arc<PlaneWaveBasis>,
        orbitals: DMatrix<C64>,
        occupations: Vec<f64>,
    ) -> Result<Self> {
        if orbitals.nrows() != basis.len() {
            return Err(Error::LengthMismatch {
                expected: basis.len(),
                actual: orbitals.nrows(),
            });
        }
        if occupations.len() != orbitals.ncols() {
            return Err(Error::LengthMismatch {
                expected: orbitals.ncols(),
                actual: occupations.len(),
            });
        }
        for (index, &f) in occupations.iter().enumerate() {
            if !(f.is_finite() && (-OCCUPATION_FLOOR..=1.0 + OCCUPATION_FLOOR).contains(&f)) {
                return Err(Error::OccupationOutOfRange { index, value: f });
            }
        }
        let err = orthonormality_error(&orbitals);
        if err > ORTHONORMALITY_TOL {
            return Err(Error::NotOrthonormal(err));
        }
        Ok(Self {
            basis,
            orbitals,
            occupations,
            eigenvalues: None,
        })
    }

    pub fn with_eigenvalues(mut self, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() != self.occupations.len() {
            return Err(Error::LengthMismatch {
                expected: self.occupations.len(),
                actual: eigenvalues.len(),
            });
        }
        self.eigenvalues = Some(eigenvalues);
        Ok(self)
    }

    pub fn basis(&self) -> &Arc<PlaneWaveBasis> {
        &self.basis
    }

    pub fn orbitals(&self) -> &DMatrix<C64> {
        &self.orbitals
    }

    pub fn occupations(&self) -> &[f64] {
        &self.occupations
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    pub fn len(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.occupations.iter().sum()
    }

    pub fn orbital(&self, i: usize) -> Vec<C64> {
        self.orbitals.column(i).iter().copied().collect()
    }

    /// `ρ(x) = Σ_i f_i |φ_i(x)|²` on the basis grid.
    pub fn density(&self) -> GridFunction {
        density_of(&self.basis, &self.orbitals, &self.occupations)
    }

    /// `Σ_i f_i · ½‖∇φ_i‖²`.
    pub fn kinetic_energy(&self) -> f64 {
        let g2: Vec<f64> = self.basis.g_vectors().iter().map(|g| g.norm2).collect();
        self.occupations
            .iter()
            .zip(self.orbitals.column_iter())
            .map(|(f, col)| {
                f * 0.5
                    * col
                        .iter()
                        .zip(&g2)
                        .map(|(c, g)| g * c.norm_sqr())
                        .sum::<f64>()
            })
            .sum()
    }

    /// `Tr|Γ| + Tr(|∇|Γ|∇|)` from the spectral form.
    pub fn s11_norm(&self) -> f64 {
        let g2: Vec<f64> = self.basis.g_vectors().iter().map(|g| g.norm2).collect();
        self.occupations
            .iter()
            .zip(self.orbitals.column_iter())
            .map(|(f, col)| {
                let grad: f64 = col.iter().zip(&g2).map(|(c, g)| g * c.norm_sqr()).sum();
                f.abs() * (1.0 + grad)
            })
            .sum()
    }

    pub fn to_operator(&self) -> LowRankOperator {
        LowRankOperator {
            basis: self.basis.clone(),
            vectors: self.orbitals.clone(),
            weights: self.occupations.clone(),
        }
    }

    /// Keeps the orbitals with `f > floor` plus `buffer` further ones, in
    /// stored order.
    pub fn retain(&self, floor: f64, buffer: usize) -> DensityMatrix {
        let occupied = self.occupations.iter().filter(|&&f| f > floor).count();
        let keep = (occupied + buffer).min(self.len());
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.occupations[b].total_cmp(&self.occupations[a]));
        let mut kept: Vec<usize> = order[..keep].to_vec();
        kept.sort_unstable();
        DensityMatrix {
            basis: self.basis.clone(),
            orbitals: self.orbitals.select_columns(kept.iter()),
            occupations: kept.iter().map(|&i| self.occupations[i]).collect(),
            eigenvalues: self
                .eigenvalues
                .as_ref()
                .map(|e| kept.iter().map(|&i| e[i]).collect()),
        }
    }

    /// `Γ + εΨ` for a Hermitian `Ψ` given in the orbital frame, re-expressed
    /// in spectral form.
    pub fn perturbed(&self, psi: &DMatrix<C64>, eps: f64) -> Result<DensityMatrix> {
        let m = self.len();
        if psi.nrows() != m || psi.ncols() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                actual: psi.nrows(),
            });
        }
        let mut small = psi * C64::new(eps, 0.0);
        for i in 0..m {
            small[(i, i)] += self.occupations[i];
        }
        let (values, vectors) = hermitian_eigen(&small);
        let orbitals = &self.orbitals * vectors;
        DensityMatrix::new(self.basis.clone(), orbitals, values)
    }
}

pub(crate) fn density_of(
    basis: &Arc<PlaneWaveBasis>,
    orbitals: &DMatrix<C64>,
    occupations: &[f64],
) -> GridFunction {
    let mut rho = vec![0.0; basis.grid_len()];
    for (col, &f) in orbitals.column_iter().zip(occupations) {
        if f == 0.0 {
            continue;
        }
        let coeffs: Vec<C64> = col.iter().copied().collect();
        let phi = to_grid(basis, &coeffs).expect("column length equals basis size");
        for (r, v) in rho.iter_mut().zip(phi.values()) {
            *r += f * v.norm_sqr();
        }
    }
    GridFunction::from_real(basis.clone(), &rho).expect("grid length")
}

/// `Σ_k w_k |a_k⟩⟨a_k|` with arbitrary (not necessarily orthonormal)
/// columns `a_k`; used for differences of density matrices and the
/// non-orthonormalised projection.
#[derive(Clone, Debug)]
pub struct LowRankOperator {
    basis: Arc<PlaneWaveBasis>,
    vectors: DMatrix<C64>,
    weights: Vec<f64>,
}

impl LowRankOperator {
    pub fn new(basis: Arc<PlaneWaveBasis>, vectors: DMatrix<C64>, weights: Vec<f64>) -> Result<Self> {
        if vectors.nrows() != basis.len() {
            return Err(Error::LengthMismatch {
                expected: basis.len(),
                actual: vectors.nrows(),
            });
        }
        if vectors.ncols() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: vectors.ncols(),
                actual: weights.len(),
            });
        }
        Ok(Self {
            basis,
            vectors,
            weights,
        })
    }

    pub fn basis(&self) -> &Arc<PlaneWaveBasis> {
        &self.basis
    }

    pub fn vectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The same operator written in the larger basis `to`.
    pub fn embed(&self, to: &Arc<PlaneWaveBasis>) -> Result<Self> {
        if Arc::ptr_eq(&self.basis, to) {
            return Ok(self.clone());
        }
        let mut vectors = DMatrix::zeros(to.len(), self.vectors.ncols());
        for (k, col) in self.vectors.column_iter().enumerate() {
            let coeffs: Vec<C64> = col.iter().copied().collect();
            let big = self.basis.embed(&coeffs, to)?;
            vectors.column_mut(k).copy_from_slice(&big);
        }
        Ok(Self {
            basis: to.clone(),
            vectors,
            weights: self.weights.clone(),
        })
    }

    /// `self - other`, written in whichever of the two bases contains the other.
    pub fn difference(&self, other: &LowRankOperator) -> Result<Self> {
        let target = if other.basis.is_subset_of(&self.basis) {
            self.basis.clone()
        } else if self.basis.is_subset_of(&other.basis) {
            other.basis.clone()
        } else {
            return Err(Error::IncompatibleBasis(
                "neither basis contains the other".into(),
            ));
        };
        let a = self.embed(&target)?;
        let b = other.embed(&target)?;
        let n = a.vectors.ncols() + b.vectors.ncols();
        let mut vectors = DMatrix::zeros(target.len(), n);
        vectors.columns_mut(0, a.vectors.ncols()).copy_from(&a.vectors);
        vectors
            .columns_mut(a.vectors.ncols(), b.vectors.ncols())
            .copy_from(&b.vectors);
        let mut weights = a.weights;
        weights.extend(b.weights.iter().map(|w| -w));
        Ok(Self {
            basis: target,
            vectors,
            weights,
        })
    }

    pub fn trace(&self) -> f64 {
        self.weights
            .iter()
            .zip(self.vectors.column_iter())
            .map(|(w, c)| w * c.norm_squared())
            .sum()
    }

    /// `Tr|A|`.
    pub fn trace_norm(&self) -> f64 {
        low_rank_trace_norm(&self.vectors, &self.weights)
    }

    /// `Tr| |∇| A |∇| |`.
    pub fn gradient_trace_norm(&self) -> f64 {
        let mut scaled = self.vectors.clone();
        for (r, g) in self.basis.g_vectors().iter().enumerate() {
            let s = g.norm2.sqrt();
            scaled.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        low_rank_trace_norm(&scaled, &self.weights)
    }

    /// `‖A‖_{S^{1,1}} = Tr|A| + Tr| |∇| A |∇| |`.
    pub fn s11_norm(&self) -> f64 {
        self.trace_norm() + self.gradient_trace_norm()
    }

    /// Dense matrix in the plane-wave basis (small bases only).
    pub fn dense(&self) -> DMatrix<C64> {
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.weights.len(),
            self.weights.iter().map(|&x| C64::new(x, 0.0)),
        ));
        &self.vectors * w * self.vectors.adjoint()
    }
}

/// `‖Γ₁ - Γ₂‖_{S^{1,1}}` for operators on nested bases.
pub fn s11_distance(a: &LowRankOperator, b: &LowRankOperator) -> Result<f64> {
    Ok(a.difference(b)?.s11_norm())
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FreeEnergyBreakdown {
    pub kinetic: f64,
    pub external: f64,
    pub hartree: f64,
    pub xc: f64,
    pub entropy: f64,
    pub total: f64,
}

/// `F(Γ) = Tr(-½ΔΓ) + ∫ v_ext ρ + E_H + E_xc + β⁻¹ Tr(Γ lnΓ + (1-Γ) ln(1-Γ))`.
pub fn free_energy(
    gamma: &DensityMatrix,
    vext: &GridFunction,
    interactions: &Interactions,
    s: Smearing,
) -> Result<FreeEnergyBreakdown> {
    let rho = gamma.density();
    free_energy_with_density(gamma, &rho, vext, interactions, s)
}

pub(crate) fn free_energy_with_density(
    gamma: &DensityMatrix,
    rho: &GridFunction,
    vext: &GridFunction,
    interactions: &Interactions,
    s: Smearing,
) -> Result<FreeEnergyBreakdown> {
    let terms = assemble_effective(rho, vext, interactions)?;
    let kinetic = gamma.kinetic_energy();
    let entropy = entropy(gamma.occupations(), s)?;
    let total = kinetic + terms.e_external + terms.e_hartree + terms.e_xc + entropy;
    Ok(FreeEnergyBreakdown {
        kinetic,
        external: terms.e_external,
        hartree: terms.e_hartree,
        xc: terms.e_xc,
        entropy,
        total,
    })
}

/// Free-energy gradient in the orbital frame,
/// `G_ij = ⟨φ_i|H(ρ_Γ)|φ_j⟩ + δ_ij β⁻¹ ln(f_i / (1 - f_i))`, so that
/// `dF(Γ + εΨ)/dε|₀ = Tr(GΨ)`. Needs `0 < f_i < 1`.
pub fn free_energy_gradient(
    gamma: &DensityMatrix,
    vext: &GridFunction,
    interactions: &Interactions,
    s: Smearing,
) -> Result<DMatrix<C64>> {
    for (index, &f) in gamma.occupations().iter().enumerate() {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::OccupationOutOfRange { index, value: f });
        }
    }
    let rho = gamma.density();
    let v = assemble_effective(&rho, vext, interactions)?.total();
    let h = Hamiltonian::new(gamma.basis().clone(), v)?;
    let hphi = h.apply_block(gamma.orbitals());
    let mut g = gamma.orbitals().adjoint() * hphi;
    for (i, &f) in gamma.occupations().iter().enumerate() {
        g[(i, i)] += (f.ln() - (-f).ln_1p()) / s.beta();
    }
    Ok(g)
}

/// `Tr(GΨ)`.
pub fn directional_derivative(gradient: &DMatrix<C64>, psi: &DMatrix<C64>) -> f64 {
    (gradient * psi).trace().re
}

/// Orbital-wise truncation onto `target` followed by symmetric
/// orthonormalisation, keeping the occupations.
pub fn project_dm(gamma: &DensityMatrix, target: &Arc<PlaneWaveBasis>) -> Result<DensityMatrix> {
    let plain = project_dm_plain(gamma, target)?;
    let mut keep = Vec::new();
    for (i, col) in plain.vectors.column_iter().enumerate() {
        let norm = col.norm();
        if norm < ANNIHILATION_TOL {
            if gamma.occupations[i] > OCCUPATION_FLOOR {
                return Err(Error::ProjectionAnnihilates { index: i, norm });
            }
        } else {
            keep.push(i);
        }
    }
    let truncated = plain.vectors.select_columns(keep.iter());
    let orbitals = lowdin(&truncated)?;
    let occupations = keep.iter().map(|&i| gamma.occupations[i]).collect();
    DensityMatrix::new(target.clone(), orbitals, occupations)
}

/// `Σ f_i |π φ_i⟩⟨π φ_i|` without re-orthonormalisation.
pub fn project_dm_plain(gamma: &DensityMatrix, target: &Arc<PlaneWaveBasis>) -> Result<LowRankOperator> {
    let mut vectors = DMatrix::zeros(target.len(), gamma.len());
    for (k, col) in gamma.orbitals.column_iter().enumerate() {
        let coeffs: Vec<C64> = col.iter().copied().collect();
        let small = gamma.basis.restrict(&coeffs, target)?;
        vectors.column_mut(k).copy_from_slice(&small);
    }
    LowRankOperator::new(target.clone(), vectors, gamma.occupations.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_basis::{build_basis, Cell};
    use std::f64::consts::PI;

    fn basis(ec: f64) -> Arc<PlaneWaveBasis> {
        Arc::new(build_basis(&Cell::cubic(1, 2.0 * PI).unwrap(), ec).unwrap())
    }

    fn plane_waves(b: &Arc<PlaneWaveBasis>, idx: &[usize], f: &[f64]) -> DensityMatrix {
        let mut c = DMatrix::zeros(b.len(), idx.len());
        for (k, &i) in idx.iter().enumerate() {
            c[(i, k)] = C64::new(1.0, 0.0);
        }
        DensityMatrix::new(b.clone(), c, f.to_vec()).unwrap()
    }

    #[test]
    fn plane_wave_density_is_uniform() {
        let b = basis(4.0);
        let gamma = plane_waves(&b, &[0, 1, 2], &[1.0, 0.5, 0.25]);
        let rho = gamma.density();
        let expected = 1.75 / (2.0 * PI);
        assert!(rho.values().iter().all(|x| (x.re - expected).abs() < 1e-12));
        assert!((rho.integrate().re - 1.75).abs() < 1e-12);
    }

    #[test]
    fn s11_norm_of_single_plane_wave() {
        let b = basis(4.0);
        // index 0 is G = -2
        let gamma = plane_waves(&b, &[0], &[1.0]);
        assert!((gamma.s11_norm() - 5.0).abs() < 1e-12);
        assert!((gamma.to_operator().s11_norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        let b = basis(2.0);
        let c = DMatrix::from_element(b.len(), 1, C64::new(1.0, 0.0));
        assert!(matches!(
            DensityMatrix::new(b.clone(), c, vec![1.0]),
            Err(Error::NotOrthonormal(_))
        ));
        let mut c = DMatrix::zeros(b.len(), 1);
        c[(0, 0)] = C64::new(1.0, 0.0);
        assert!(matches!(
            DensityMatrix::new(b, c, vec![1.5]),
            Err(Error::OccupationOutOfRange { .. })
        ));
    }

    #[test]
    fn projection_annihilating_occupied_orbital_fails() {
        let big = basis(8.0);
        let small = basis(1.0);
        let gamma = plane_waves(&big, &[0], &[1.0]);
        assert!(matches!(
            project_dm(&gamma, &small),
            Err(Error::ProjectionAnnihilates { .. })
        ));
    }

    #[test]
    fn retain_keeps_occupied_plus_buffer() {
        let b = basis(8.0);
        let gamma = plane_waves(&b, &[3, 4, 5, 6, 7], &[1.0, 0.3, 1e-13, 1e-14, 0.0]);
        let r = gamma.retain(OCCUPATION_FLOOR, 1);
        assert_eq!(r.occupations(), &[1.0, 0.3, 1e-13]);
    }
}
