//! Periodic cells, plane-wave basis sets and grid transforms.
//!
//! Plane waves are normalised as `e_G(r) = |Ω|^{-1/2} exp(i G·r)` so that the
//! retained set is orthonormal in `L²(Ω)`. A basis holds every reciprocal
//! lattice vector with `|G|² ≤ 2 E_c`, ordered lexicographically on integer
//! coordinates, together with an FFT grid on which products of two basis
//! functions are represented without aliasing.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix3;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result, C64};

/// Relative slack applied to the `|G|² ≤ 2 E_c` test so that shells sitting
/// exactly on the sphere are retained independently of rounding.
const SPHERE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    dimension: usize,
    /// Lattice vectors as rows; rows and columns beyond `dimension` hold the
    /// identity so that 3-vectors can be used throughout.
    lattice: [[f64; 3]; 3],
    reciprocal: [[f64; 3]; 3],
    volume: f64,
}

impl Cell {
    /// Builds a cell from `dimension` lattice vectors of length `dimension`.
    pub fn new(dimension: usize, lattice_vectors: &[Vec<f64>]) -> Result<Self> {
        if !(1..=3).contains(&dimension) {
            return Err(Error::DegenerateCell(format!(
                "dimension must be 1, 2 or 3, got {dimension}"
            )));
        }
        if lattice_vectors.len() != dimension
            || lattice_vectors.iter().any(|row| row.len() != dimension)
        {
            return Err(Error::DegenerateCell(format!(
                "expected {dimension} lattice vectors with {dimension} components"
            )));
        }
        let mut lattice = [[0.0; 3]; 3];
        for (k, row) in lattice.iter_mut().enumerate() {
            if k < dimension {
                row[..dimension].copy_from_slice(&lattice_vectors[k]);
            } else {
                row[k] = 1.0;
            }
        }
        if lattice.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateCell("non-finite lattice entry".into()));
        }
        let a = Matrix3::from_fn(|i, j| lattice[i][j]);
        let det = a.determinant();
        let scale = lattice_vectors
            .iter()
            .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt())
            .product::<f64>();
        if det.abs() <= 1e-12 * scale || scale == 0.0 {
            return Err(Error::DegenerateCell(format!(
                "lattice vectors are singular (det = {det:e})"
            )));
        }
        let inv = a.try_inverse().ok_or_else(|| {
            Error::DegenerateCell("lattice matrix is not invertible".into())
        })?;
        // rows b_i with a_i · b_j = 2π δ_ij
        let b = inv.transpose() * (2.0 * std::f64::consts::PI);
        let mut reciprocal = [[0.0; 3]; 3];
        for (i, row) in reciprocal.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = b[(i, j)];
            }
        }
        Ok(Self {
            dimension,
            lattice,
            reciprocal,
            volume: det.abs(),
        })
    }

    /// Cubic (or square, or segment) cell with edge `length`.
    pub fn cubic(dimension: usize, length: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..dimension)
            .map(|i| {
                let mut row = vec![0.0; dimension];
                row[i] = length;
                row
            })
            .collect();
        Self::new(dimension, &rows)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn lattice_vector(&self, k: usize) -> [f64; 3] {
        self.lattice[k]
    }

    pub fn reciprocal_vector(&self, k: usize) -> [f64; 3] {
        self.reciprocal[k]
    }

    /// Cartesian reciprocal vector `Σ_k m_k b_k`.
    pub fn reciprocal_cartesian(&self, m: [i32; 3]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (k, &mk) in m.iter().enumerate().take(self.dimension) {
            for (gi, bi) in g.iter_mut().zip(self.reciprocal[k].iter()) {
                *gi += mk as f64 * bi;
            }
        }
        g
    }

    /// Cartesian position of fractional coordinates `s`.
    pub fn fractional_to_cartesian(&self, s: [f64; 3]) -> [f64; 3] {
        let mut r = [0.0; 3];
        for (k, &sk) in s.iter().enumerate().take(self.dimension) {
            for (ri, ai) in r.iter_mut().zip(self.lattice[k].iter()) {
                *ri += sk * ai;
            }
        }
        r
    }

    /// Fractional coordinates of a cartesian position.
    pub fn cartesian_to_fractional(&self, r: [f64; 3]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (k, sk) in s.iter_mut().enumerate().take(self.dimension) {
            *sk = dot(&self.reciprocal[k], &r) / (2.0 * std::f64::consts::PI);
        }
        s
    }
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GVector {
    pub coords: [i32; 3],
    pub cartesian: [f64; 3],
    pub norm2: f64,
}

/// Forward/inverse FFT plans for a row-major grid `[n0, n1, n2]`.
#[derive(Clone)]
struct FftPlans {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl FftPlans {
    fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Self {
            dims,
            forward,
            inverse,
        }
    }

    fn run(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [n0, n1, n2] = self.dims;
        debug_assert_eq!(data.len(), n0 * n1 * n2);
        if n2 > 1 {
            for chunk in data.chunks_exact_mut(n2) {
                plans[2].process(chunk);
            }
        }
        if n1 > 1 {
            let mut line = vec![C64::new(0.0, 0.0); n1];
            for i0 in 0..n0 {
                for i2 in 0..n2 {
                    let base = i0 * n1 * n2 + i2;
                    for (i1, x) in line.iter_mut().enumerate() {
                        *x = data[base + i1 * n2];
                    }
                    plans[1].process(&mut line);
                    for (i1, x) in line.iter().enumerate() {
                        data[base + i1 * n2] = *x;
                    }
                }
            }
        }
        if n0 > 1 {
            let stride = n1 * n2;
            let mut line = vec![C64::new(0.0, 0.0); n0];
            for off in 0..stride {
                for (i0, x) in line.iter_mut().enumerate() {
                    *x = data[off + i0 * stride];
                }
                plans[0].process(&mut line);
                for (i0, x) in line.iter().enumerate() {
                    data[off + i0 * stride] = *x;
                }
            }
        }
    }

    /// Unnormalised `Σ_j x_j exp(-2πi k·j/n)`.
    fn forward(&self, data: &mut [C64]) {
        self.run(data, &self.forward);
    }

    /// Unnormalised `Σ_k x_k exp(+2πi k·j/n)`.
    fn inverse(&self, data: &mut [C64]) {
        self.run(data, &self.inverse);
    }
}

/// Smallest length `≥ n` whose only prime factors are 2, 3 and 5.
pub fn fast_fft_length(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Signed integer frequency of FFT index `i` on a grid of length `n`.
pub fn grid_frequency(i: usize, n: usize) -> i32 {
    if i <= n / 2 {
        i as i32
    } else {
        i as i32 - n as i32
    }
}

#[derive(Clone)]
pub struct PlaneWaveBasis {
    cell: Cell,
    cutoff: f64,
    g_vectors: Vec<GVector>,
    fft_grid: [usize; 3],
    grid_index: Vec<usize>,
    lookup: HashMap<[i32; 3], usize>,
    grid_g2: Vec<f64>,
    plans: FftPlans,
}

impl fmt::Debug for PlaneWaveBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlaneWaveBasis")
            .field("dimension", &self.cell.dimension)
            .field("cutoff", &self.cutoff)
            .field("size", &self.g_vectors.len())
            .field("fft_grid", &self.fft_grid)
            .finish()
    }
}

/// All reciprocal vectors with `|G|² ≤ 2·cutoff` in lexicographic order, on
/// the smallest alias-free grid.
pub fn build_basis(cell: &Cell, cutoff: f64) -> Result<PlaneWaveBasis> {
    PlaneWaveBasis::build(cell, cutoff, None)
}

impl PlaneWaveBasis {
    /// Builds a basis; `grid` overrides the FFT grid (it must still hold the
    /// doubled G-sphere). Sharing one grid across cutoffs keeps the discrete
    /// functionals nested.
    pub fn build(cell: &Cell, cutoff: f64, grid: Option<[usize; 3]>) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::InvalidCutoff(cutoff));
        }
        let d = cell.dimension();
        let gmax2 = 2.0 * cutoff * (1.0 + SPHERE_SLACK);
        let gmax = gmax2.sqrt();
        // m_k = G · a_k / 2π, so |m_k| ≤ |a_k| |G| / 2π
        let mut bound = [0i32; 3];
        for (k, b) in bound.iter_mut().enumerate().take(d) {
            let a = cell.lattice_vector(k);
            *b = (dot(&a, &a).sqrt() * gmax / (2.0 * std::f64::consts::PI)).floor() as i32 + 1;
        }
        let mut g_vectors = Vec::new();
        for m0 in -bound[0]..=bound[0] {
            for m1 in -bound[1]..=bound[1] {
                for m2 in -bound[2]..=bound[2] {
                    let coords = [m0, m1, m2];
                    let cart = cell.reciprocal_cartesian(coords);
                    let norm2 = dot(&cart, &cart);
                    if norm2 <= gmax2 {
                        g_vectors.push(GVector {
                            coords,
                            cartesian: cart,
                            norm2,
                        });
                    }
                }
            }
        }
        // lexicographic order is produced by the loop nest
        let mut max_coord = [0usize; 3];
        for g in &g_vectors {
            for k in 0..3 {
                max_coord[k] = max_coord[k].max(g.coords[k].unsigned_abs() as usize);
            }
        }
        let mut needed = [1usize; 3];
        for k in 0..d {
            needed[k] = 4 * max_coord[k] + 1;
        }
        let fft_grid = match grid {
            None => {
                let mut dims = [1usize; 3];
                for k in 0..d {
                    dims[k] = fast_fft_length(needed[k]);
                }
                dims
            }
            Some(dims) => {
                for k in 0..3 {
                    let ok = if k < d { dims[k] >= needed[k] } else { dims[k] == 1 };
                    if !ok {
                        return Err(Error::IncompatibleBasis(format!(
                            "grid {dims:?} cannot hold the doubled G-sphere (needs {needed:?})"
                        )));
                    }
                }
                dims
            }
        };
        let [n0, n1, n2] = fft_grid;
        let wrap = |m: i32, n: usize| m.rem_euclid(n as i32) as usize;
        let grid_index = g_vectors
            .iter()
            .map(|g| {
                (wrap(g.coords[0], n0) * n1 + wrap(g.coords[1], n1)) * n2 + wrap(g.coords[2], n2)
            })
            .collect();
        let lookup = g_vectors
            .iter()
            .enumerate()
            .map(|(i, g)| (g.coords, i))
            .collect();
        let mut grid_g2 = Vec::with_capacity(n0 * n1 * n2);
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let m = [
                        grid_frequency(i0, n0),
                        grid_frequency(i1, n1),
                        grid_frequency(i2, n2),
                    ];
                    let g = cell.reciprocal_cartesian(m);
                    grid_g2.push(dot(&g, &g));
                }
            }
        }
        Ok(Self {
            cell: cell.clone(),
            cutoff,
            g_vectors,
            fft_grid,
            grid_index,
            lookup,
            grid_g2,
            plans: FftPlans::new(fft_grid),
        })
    }

    pub fn cell(&self) -> &Cell {
        &self.cell
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn g_vectors(&self) -> &[GVector] {
        &self.g_vectors
    }

    pub fn len(&self) -> usize {
        self.g_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_vectors.is_empty()
    }

    pub fn fft_grid(&self) -> [usize; 3] {
        self.fft_grid
    }

    pub fn grid_len(&self) -> usize {
        self.fft_grid.iter().product()
    }

    /// Quadrature weight `|Ω| / M` of one grid point.
    pub fn grid_weight(&self) -> f64 {
        self.cell.volume() / self.grid_len() as f64
    }

    /// Flat FFT-grid index of each basis vector.
    pub fn grid_index(&self) -> &[usize] {
        &self.grid_index
    }

    /// `|G|²` for every FFT grid mode (signed frequencies).
    pub fn grid_g2(&self) -> &[f64] {
        &self.grid_g2
    }

    pub fn index_of(&self, coords: [i32; 3]) -> Option<usize> {
        self.lookup.get(&coords).copied()
    }

    /// `½|G|²` per basis vector.
    pub fn kinetic_diagonal(&self) -> Vec<f64> {
        self.g_vectors.iter().map(|g| 0.5 * g.norm2).collect()
    }

    /// Whether `|G|² ≤ 2 E_c` for this basis' cutoff.
    pub fn within_cutoff(&self, norm2: f64) -> bool {
        norm2 <= 2.0 * self.cutoff * (1.0 + SPHERE_SLACK)
    }

    /// Whether every G-vector of `self` is also in `other` (same cell).
    pub fn is_subset_of(&self, other: &PlaneWaveBasis) -> bool {
        self.cell == other.cell
            && self
                .g_vectors
                .iter()
                .all(|g| other.index_of(g.coords).is_some())
    }

    /// Cartesian position of grid point `flat`.
    pub fn grid_point(&self, flat: usize) -> [f64; 3] {
        let [_, n1, n2] = self.fft_grid;
        let i0 = flat / (n1 * n2);
        let i1 = (flat / n2) % n1;
        let i2 = flat % n2;
        let [n0, n1, n2] = self.fft_grid;
        self.cell.fractional_to_cartesian([
            i0 as f64 / n0 as f64,
            i1 as f64 / n1 as f64,
            i2 as f64 / n2 as f64,
        ])
    }

    /// Coefficients of `coeffs` (on `self`) placed into the larger basis `to`.
    pub fn embed(&self, coeffs: &[C64], to: &PlaneWaveBasis) -> Result<Vec<C64>> {
        self.check_len(coeffs.len())?;
        if !self.is_subset_of(to) {
            return Err(Error::IncompatibleBasis(
                "source basis is not contained in the target".into(),
            ));
        }
        let mut out = vec![C64::new(0.0, 0.0); to.len()];
        for (g, c) in self.g_vectors.iter().zip(coeffs) {
            out[to.index_of(g.coords).unwrap()] = *c;
        }
        Ok(out)
    }

    /// Fourier truncation of `coeffs` (on `self`) onto the nested basis `to`.
    pub fn restrict(&self, coeffs: &[C64], to: &PlaneWaveBasis) -> Result<Vec<C64>> {
        self.check_len(coeffs.len())?;
        if !to.is_subset_of(self) {
            return Err(Error::IncompatibleBasis(
                "target basis is not nested in the source".into(),
            ));
        }
        Ok(to
            .g_vectors
            .iter()
            .map(|g| coeffs[self.index_of(g.coords).unwrap()])
            .collect())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// Values of a periodic function on the FFT grid of a basis.
#[derive(Clone, Debug)]
pub struct GridFunction {
    basis: Arc<PlaneWaveBasis>,
    values: Vec<C64>,
}

impl GridFunction {
    pub fn new(basis: Arc<PlaneWaveBasis>, values: Vec<C64>) -> Result<Self> {
        if values.len() != basis.grid_len() {
            return Err(Error::LengthMismatch {
                expected: basis.grid_len(),
                actual: values.len(),
            });
        }
        Ok(Self { basis, values })
    }

    pub fn zeros(basis: Arc<PlaneWaveBasis>) -> Self {
        let n = basis.grid_len();
        Self {
            basis,
            values: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn from_real(basis: Arc<PlaneWaveBasis>, values: &[f64]) -> Result<Self> {
        Self::new(basis, values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn constant(basis: Arc<PlaneWaveBasis>, value: f64) -> Self {
        let n = basis.grid_len();
        Self {
            basis,
            values: vec![C64::new(value, 0.0); n],
        }
    }

    /// Grid function from the full set of grid Fourier coefficients
    /// `û_G = (e_G, u)` (FFT index order).
    pub fn from_fourier(basis: Arc<PlaneWaveBasis>, mut coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != basis.grid_len() {
            return Err(Error::LengthMismatch {
                expected: basis.grid_len(),
                actual: coeffs.len(),
            });
        }
        basis.plans.inverse(&mut coeffs);
        let scale = basis.cell.volume().powf(-0.5);
        coeffs.iter_mut().for_each(|x| *x *= scale);
        Ok(Self {
            basis,
            values: coeffs,
        })
    }

    pub fn basis(&self) -> &Arc<PlaneWaveBasis> {
        &self.basis
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|x| x.re).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.im.abs()))
    }

    /// All grid Fourier coefficients `û_G = |Ω|^{1/2}/M · FFT(u)`.
    pub fn fourier(&self) -> Vec<C64> {
        let mut data = self.values.clone();
        self.basis.plans.forward(&mut data);
        let scale = self.basis.cell.volume().sqrt() / self.basis.grid_len() as f64;
        data.iter_mut().for_each(|x| *x *= scale);
        data
    }

    /// Grid quadrature `Σ_j u_j |Ω|/M`.
    pub fn integrate(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.basis.grid_weight()
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis)
            || (self.basis.cell == other.basis.cell && self.basis.fft_grid == other.basis.fft_grid)
    }

    fn check_grid(&self, other: &GridFunction) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::IncompatibleBasis(
                "grid functions live on different grids".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_grid(other)?;
        Ok(Self {
            basis: self.basis.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_grid(other)?;
        Ok(Self {
            basis: self.basis.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> GridFunction {
        Self {
            basis: self.basis.clone(),
            values: self.values.iter().map(|a| a * factor).collect(),
        }
    }
}

/// Pointwise values of `Σ_G c_G e_G(r)` on the FFT grid.
pub fn to_grid(basis: &Arc<PlaneWaveBasis>, coefficients: &[C64]) -> Result<GridFunction> {
    basis.check_len(coefficients.len())?;
    let mut data = vec![C64::new(0.0, 0.0); basis.grid_len()];
    for (&idx, &c) in basis.grid_index.iter().zip(coefficients) {
        data[idx] = c;
    }
    GridFunction::from_fourier(basis.clone(), data)
}

/// Coefficients of `u` on the G-set of its basis.
pub fn from_grid(u: &GridFunction) -> Vec<C64> {
    let full = u.fourier();
    u.basis.grid_index.iter().map(|&i| full[i]).collect()
}

/// Fourier truncation `π_{E_c}` onto `target`'s cutoff, returned on the grid
/// of `u`.
pub fn project(u: &GridFunction, target: &PlaneWaveBasis) -> Result<GridFunction> {
    if u.basis.cell != target.cell {
        return Err(Error::IncompatibleBasis(
            "projection target lives on a different cell".into(),
        ));
    }
    let mut full = u.fourier();
    for (c, &g2) in full.iter_mut().zip(u.basis.grid_g2.iter()) {
        if !target.within_cutoff(g2) {
            *c = C64::new(0.0, 0.0);
        }
    }
    GridFunction::from_fourier(u.basis.clone(), full)
}

/// `(u, v)_{L²} = Σ_G conj(û_G) v̂_G`.
pub fn l2_inner(u: &GridFunction, v: &GridFunction) -> Result<C64> {
    u.check_grid(v)?;
    let (a, b) = (u.fourier(), v.fourier());
    Ok(a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum())
}

pub fn l2_norm(u: &GridFunction) -> f64 {
    u.fourier().iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖u‖²_{H¹} = Σ_G (1 + |G|²) |û_G|²`.
pub fn h1_norm(u: &GridFunction) -> f64 {
    u.fourier()
        .iter()
        .zip(u.basis.grid_g2.iter())
        .map(|(x, g2)| (1.0 + g2) * x.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Coefficient-space `‖c‖²_{H¹}` for a vector on `basis`.
pub fn coefficient_h1_norm2(basis: &PlaneWaveBasis, coeffs: &[C64]) -> f64 {
    basis
        .g_vectors
        .iter()
        .zip(coeffs)
        .map(|(g, c)| (1.0 + g.norm2) * c.norm_sqr())
        .sum()
}
