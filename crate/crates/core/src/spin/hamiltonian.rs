use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use super::operators::{kron, spin_matrices, CMatrix};
use super::{FieldPoint, SpinSystem};
use crate::constants::{MU_B_OVER_H, MU_N_OVER_H};

/// The spin Hamiltonian split into its field-independent part and the three
/// Cartesian field couplings, `H(B) = H0 + Bx Mx + By My + Bz Mz` (Hz, T).
///
/// Electron operators sit on the left of the Kronecker product, nuclear
/// operators on the right.
#[derive(Clone, Debug)]
pub struct SpinHamiltonian {
    zero_field: CMatrix,
    field_coupling: [CMatrix; 3],
    electron: [CMatrix; 3],
    dim: usize,
}

fn c(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

impl SpinHamiltonian {
    pub fn new(sys: &SpinSystem) -> Self {
        let s = spin_matrices(sys.electron_spin);
        let i = spin_matrices(sys.nuclear_spin);
        let ds = sys.electron_spin.multiplicity();
        let di = sys.nuclear_spin.multiplicity();
        let dim = ds * di;
        let eye_s = CMatrix::identity(ds, ds);
        let eye_i = CMatrix::identity(di, di);

        let s_full: Vec<CMatrix> = (0..3).map(|k| kron(s.component(k), &eye_i)).collect();
        let i_full: Vec<CMatrix> = (0..3).map(|k| kron(&eye_s, i.component(k))).collect();

        let g = sys.g.matrix();
        let a = sys.a.matrix();
        let q = sys.q.matrix();

        let mut zero_field = CMatrix::zeros(dim, dim);
        if !sys.a.is_zero() {
            add_bilinear(&mut zero_field, &a, &s_full, &i_full);
        }
        if !sys.q.is_zero() {
            add_bilinear(&mut zero_field, &q, &i_full, &i_full);
        }

        let field_coupling = [0usize, 1, 2].map(|axis| {
            let mut m = CMatrix::zeros(dim, dim);
            for (j, sj) in s_full.iter().enumerate() {
                let coeff = MU_B_OVER_H * g[(axis, j)];
                if coeff != 0.0 {
                    m += sj * c(coeff);
                }
            }
            if sys.g_n != 0.0 {
                m -= &i_full[axis] * c(MU_N_OVER_H * sys.g_n);
            }
            m
        });

        let electron = [s_full[0].clone(), s_full[1].clone(), s_full[2].clone()];
        Self {
            zero_field,
            field_coupling,
            electron,
            dim,
        }
    }

    /// `n.S` acting on the electron factor of the product space.
    pub fn electron_operator(&self, n: &Vector3<f64>) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for axis in 0..3 {
            if n[axis] != 0.0 {
                m += &self.electron[axis] * c(n[axis]);
            }
        }
        m
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn at_vector(&self, b: &Vector3<f64>) -> CMatrix {
        let mut h = self.zero_field.clone();
        for axis in 0..3 {
            if b[axis] != 0.0 {
                h += &self.field_coupling[axis] * c(b[axis]);
            }
        }
        h
    }

    pub fn at(&self, field: &FieldPoint) -> CMatrix {
        self.at_vector(&field.vector())
    }

    /// `dH/dB` along a unit direction, Hz/T.
    pub fn field_derivative(&self, direction: &Vector3<f64>) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for axis in 0..3 {
            if direction[axis] != 0.0 {
                m += &self.field_coupling[axis] * c(direction[axis]);
            }
        }
        m
    }
}

/// Adds `sum_jk T_jk L_j R_k` to `h`.
fn add_bilinear(h: &mut CMatrix, t: &Matrix3<f64>, left: &[CMatrix], right: &[CMatrix]) {
    for j in 0..3 {
        for k in 0..3 {
            if t[(j, k)] != 0.0 {
                *h += (&left[j] * &right[k]) * c(t[(j, k)]);
            }
        }
    }
}

/// `H = (muB/h) B.g.S + S.A.I + I.Q.I - (muN/h) g_n B.I`, in Hz.
pub fn build_hamiltonian(sys: &SpinSystem, field: &FieldPoint) -> CMatrix {
    SpinHamiltonian::new(sys).at(field)
}
