//! Physical constants. Magnetic moments and thermal energies are expressed as
//! frequencies so that Hamiltonians come out in Hz.

/// Bohr magneton over Planck's constant, Hz/T.
pub const MU_B_OVER_H: f64 = 13.996245e9;
/// Boltzmann constant over Planck's constant, Hz/K.
pub const K_B_OVER_H: f64 = 20.836619e9;
/// Nuclear magneton over Planck's constant, Hz/T.
pub const MU_N_OVER_H: f64 = 7.622593e6;

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Vacuum permeability, T m / A.
pub const MU_0: f64 = 1.256_637_062_12e-6;
