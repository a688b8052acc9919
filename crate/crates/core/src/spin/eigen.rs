use nalgebra::DVector;

use super::operators::CMatrix;
use crate::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    energies: Vec<f64>,
    vectors: CMatrix,
}

impl Eigensystem {
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn dimension(&self) -> usize {
        self.energies.len()
    }

    pub fn vector(&self, k: usize) -> nalgebra::DVectorView<'_, num_complex::Complex64> {
        self.vectors.column(k)
    }

    /// `<i|op|j>`.
    pub fn matrix_element(&self, op: &CMatrix, i: usize, j: usize) -> num_complex::Complex64 {
        let opj = op * self.vectors.column(j);
        self.vectors.column(i).dotc(&opj)
    }

    /// `V diag(E) V^dagger`.
    pub fn reconstruct(&self) -> CMatrix {
        let d = DVector::from_iterator(
            self.energies.len(),
            self.energies
                .iter()
                .map(|&e| num_complex::Complex64::new(e, 0.0)),
        );
        &self.vectors * CMatrix::from_diagonal(&d) * self.vectors.adjoint()
    }
}

pub(crate) fn hermitian_residual(h: &CMatrix) -> f64 {
    let norm = h.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (h - h.adjoint()).norm() / norm
}

/// Diagonalizes a Hermitian matrix; rejects input whose anti-Hermitian part
/// exceeds `1e-12` of its norm.
pub fn eigensystem(h: &CMatrix) -> Result<Eigensystem> {
    if !h.is_square() {
        return Err(Error::param("hamiltonian", "matrix must be square"));
    }
    let residual = hermitian_residual(h);
    if residual > HERMITIAN_TOL || !residual.is_finite() {
        return Err(Error::NotHermitian(residual));
    }
    Ok(diagonalize_unchecked(h))
}

pub(crate) fn diagonalize_unchecked(h: &CMatrix) -> Eigensystem {
    let n = h.nrows();
    // symmetrize away round-off before handing to the tridiagonal solver
    let sym = (h + h.adjoint()) * num_complex::Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Eigensystem { energies, vectors }
}

pub(crate) fn eigenvalues_unchecked(h: &CMatrix) -> Vec<f64> {
    let sym = (h + h.adjoint()) * num_complex::Complex64::new(0.5, 0.0);
    let mut e: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}
