use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// A non-negative half-integer spin quantum number, stored as `2s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpinQuantumNumber {
    twice: u32,
}

impl SpinQuantumNumber {
    pub const HALF: Self = Self { twice: 1 };
    pub const ZERO: Self = Self { twice: 0 };

    pub fn new(s: f64) -> Result<Self> {
        let twice = 2.0 * s;
        if !s.is_finite() || s < 0.0 || (twice - twice.round()).abs() > 1e-9 || twice > 64.0 {
            return Err(Error::InvalidSpin(s));
        }
        Ok(Self {
            twice: twice.round() as u32,
        })
    }

    pub fn value(self) -> f64 {
        f64::from(self.twice) / 2.0
    }

    /// Number of `m` states, `2s + 1`.
    pub fn multiplicity(self) -> usize {
        self.twice as usize + 1
    }
}

/// Cartesian spin operators in the `|s, m>` basis ordered `m = s, s-1, ..., -s`.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub x: CMatrix,
    pub y: CMatrix,
    pub z: CMatrix,
}

impl SpinOperators {
    pub fn component(&self, axis: usize) -> &CMatrix {
        match axis {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }
}

/// Builds `(Sx, Sy, Sz)` for spin `s`.
///
/// Fails unless `2s` is a non-negative integer.
pub fn spin_operators(s: f64) -> Result<SpinOperators> {
    Ok(spin_matrices(SpinQuantumNumber::new(s)?))
}

pub(crate) fn spin_matrices(s: SpinQuantumNumber) -> SpinOperators {
    let dim = s.multiplicity();
    let sv = s.value();
    let mut x = CMatrix::zeros(dim, dim);
    let mut y = CMatrix::zeros(dim, dim);
    let mut z = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        let m = sv - k as f64;
        z[(k, k)] = Complex64::new(m, 0.0);
        if k + 1 < dim {
            // <m|S+|m-1> = sqrt(s(s+1) - m(m-1))
            let raise = (sv * (sv + 1.0) - m * (m - 1.0)).sqrt();
            x[(k, k + 1)] = Complex64::new(raise / 2.0, 0.0);
            x[(k + 1, k)] = Complex64::new(raise / 2.0, 0.0);
            y[(k, k + 1)] = Complex64::new(0.0, -raise / 2.0);
            y[(k + 1, k)] = Complex64::new(0.0, raise / 2.0);
        }
    }
    SpinOperators { x, y, z }
}

pub(crate) fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}
