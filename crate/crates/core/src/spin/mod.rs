//! Effective spin-1/2 electron coupled to a nuclear spin: Hamiltonian,
//! eigensystem, level tracking and transitions.

mod eigen;
mod hamiltonian;
mod operators;
mod tracking;
pub(crate) mod transitions;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use eigen::{eigensystem, Eigensystem};
pub use hamiltonian::{build_hamiltonian, SpinHamiltonian};
pub use operators::{spin_operators, CMatrix, SpinOperators, SpinQuantumNumber};
pub use tracking::{level_sweep, match_levels, LevelMatch, LevelSweep};
pub use transitions::{
    boltzmann_populations, field_sensitivity, find_transitions, polarization, resonance_fields,
    DriveAxis, FieldSensitivity, Resonance, ResonanceSearch, Transition, TransitionQuery,
};

/// Second-rank interaction tensor given by principal values and the ZYZ Euler
/// angles (radians) of its principal frame in the crystal frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub principal: [f64; 3],
    pub euler: [f64; 3],
}

impl Tensor {
    pub fn diagonal(principal: [f64; 3]) -> Self {
        Self {
            principal,
            euler: [0.0; 3],
        }
    }

    pub fn isotropic(value: f64) -> Self {
        Self::diagonal([value; 3])
    }

    pub fn zero() -> Self {
        Self::isotropic(0.0)
    }

    pub fn with_euler(mut self, euler: [f64; 3]) -> Self {
        self.euler = euler;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.principal.iter().all(|&v| v == 0.0)
    }

    /// `R(alpha, beta, gamma) = Rz(alpha) Ry(beta) Rz(gamma)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        euler_zyz(self.euler)
    }

    /// Cartesian matrix in the crystal frame, `R diag(p) R^T`.
    pub fn matrix(&self) -> Matrix3<f64> {
        let r = self.rotation();
        let d = Matrix3::from_diagonal(&Vector3::from(self.principal));
        r * d * r.transpose()
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if self
            .principal
            .iter()
            .chain(self.euler.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::param(name, "tensor entries must be finite"));
        }
        Ok(())
    }
}

pub fn euler_zyz(euler: [f64; 3]) -> Matrix3<f64> {
    let rz = |a: f64| *Rotation3::from_axis_angle(&Vector3::z_axis(), a).matrix();
    let ry = |a: f64| *Rotation3::from_axis_angle(&Vector3::y_axis(), a).matrix();
    rz(euler[0]) * ry(euler[1]) * rz(euler[2])
}

/// Spin system of one paramagnetic species.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinSystem {
    pub electron_spin: SpinQuantumNumber,
    pub nuclear_spin: SpinQuantumNumber,
    /// Electron g tensor (dimensionless).
    pub g: Tensor,
    /// Hyperfine tensor, Hz.
    pub a: Tensor,
    /// Nuclear quadrupole tensor, Hz.
    pub q: Tensor,
    /// Nuclear g factor.
    pub g_n: f64,
}

impl SpinSystem {
    pub fn new(
        electron_spin: f64,
        nuclear_spin: f64,
        g: Tensor,
        a: Tensor,
        q: Tensor,
        g_n: f64,
    ) -> Result<Self> {
        let sys = Self {
            electron_spin: SpinQuantumNumber::new(electron_spin)?,
            nuclear_spin: SpinQuantumNumber::new(nuclear_spin)?,
            g,
            a,
            q,
            g_n,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Bare electron spin-1/2 with only a Zeeman interaction.
    pub fn zeeman_only(g: Tensor) -> Self {
        Self {
            electron_spin: SpinQuantumNumber::HALF,
            nuclear_spin: SpinQuantumNumber::ZERO,
            g,
            a: Tensor::zero(),
            q: Tensor::zero(),
            g_n: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.g.validate("g")?;
        self.a.validate("a")?;
        self.q.validate("q")?;
        if !self.g_n.is_finite() {
            return Err(Error::param("g_n", "must be finite"));
        }
        Ok(())
    }

    /// Hilbert-space dimension `(2S+1)(2I+1)`.
    pub fn dimension(&self) -> usize {
        self.electron_spin.multiplicity() * self.nuclear_spin.multiplicity()
    }
}

/// Static field: magnitude (T) along a unit direction in the crystal frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldPoint {
    magnitude: f64,
    direction: Vector3<f64>,
}

impl FieldPoint {
    /// Normalizes `direction`; fails for a zero or non-finite direction.
    pub fn new(magnitude: f64, direction: [f64; 3]) -> Result<Self> {
        let d = Vector3::from(direction);
        let norm = d.norm();
        if !magnitude.is_finite() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::param(
                "field",
                "magnitude must be finite and direction non-zero",
            ));
        }
        Ok(Self {
            magnitude,
            direction: d / norm,
        })
    }

    pub fn along_z(magnitude: f64) -> Self {
        Self {
            magnitude,
            direction: Vector3::z(),
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }

    pub fn with_magnitude(&self, magnitude: f64) -> Self {
        Self {
            magnitude,
            direction: self.direction,
        }
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.direction * self.magnitude
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tensor_rotation_preserves_trace_and_symmetry() {
        let t = Tensor::diagonal([12.2, 4.78, 1.64]).with_euler([0.3, 1.1, -0.7]);
        let m = t.matrix();
        assert_abs_diff_eq!(m.trace(), 12.2 + 4.78 + 1.64, epsilon = 1e-12);
        assert!((m - m.transpose()).norm() < 1e-14);
    }

    #[test]
    fn field_direction_is_normalized() {
        let b = FieldPoint::new(0.2, [1.0, 2.0, 2.0]).unwrap();
        assert_abs_diff_eq!(b.direction().norm(), 1.0, epsilon = 1e-12);
        assert!(FieldPoint::new(0.2, [0.0; 3]).is_err());
    }

    #[test]
    fn dimension_of_er167() {
        let sys = SpinSystem::new(
            0.5,
            3.5,
            Tensor::isotropic(2.0),
            Tensor::zero(),
            Tensor::zero(),
            0.0,
        )
        .unwrap();
        assert_eq!(sys.dimension(), 16);
    }
}
