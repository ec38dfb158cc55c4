//! Small dense helpers shared by the density-matrix, SCF and response code.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    // symmetrise so roundoff in the input cannot leak into the spectrum
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let h = (m + m.transpose()) * 0.5;
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `max_ij |(C*C)_ij - δ_ij|`.
pub fn orthonormality_error(c: &DMatrix<C64>) -> f64 {
    let s = c.adjoint() * c;
    let mut err: f64 = 0.0;
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((s[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    err
}

/// Symmetric (Löwdin) orthonormalisation `C (C*C)^{-1/2}`.
pub fn lowdin(c: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let s = c.adjoint() * c;
    let (values, vectors) = hermitian_eigen(&s);
    let smallest = values.first().copied().unwrap_or(1.0);
    if smallest <= 1e-14 {
        return Err(Error::InvalidParameter(format!(
            "overlap matrix is singular (smallest eigenvalue {smallest:e})"
        )));
    }
    let inv_sqrt = DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(v.powf(-0.5), 0.0)),
    );
    let s_inv_sqrt = &vectors * DMatrix::from_diagonal(&inv_sqrt) * vectors.adjoint();
    Ok(c * s_inv_sqrt)
}

/// Trace norm of the Hermitian operator `Σ_k w_k |a_k⟩⟨a_k|` given the
/// columns `a_k` (not necessarily orthogonal).
///
/// With `A = QR`, the operator equals `Q (R W R*) Q*`, so its nonzero
/// eigenvalues are those of the small Hermitian matrix `R W R*`.
pub fn low_rank_trace_norm(vectors: &DMatrix<C64>, weights: &[f64]) -> f64 {
    assert_eq!(vectors.ncols(), weights.len());
    if weights.is_empty() {
        return 0.0;
    }
    let qr = vectors.clone().qr();
    let r = qr.r();
    let w = DMatrix::from_diagonal(&DVector::from_iterator(
        weights.len(),
        weights.iter().map(|&x| C64::new(x, 0.0)),
    ));
    let small = &r * w * r.adjoint();
    let (values, _) = hermitian_eigen(&small);
    values.iter().map(|v| v.abs()).sum()
}

pub fn frobenius(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `max_ij |M_ij - conj(M_ji)|`.
pub fn hermiticity_error(m: &DMatrix<C64>) -> f64 {
    let mut err: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}
