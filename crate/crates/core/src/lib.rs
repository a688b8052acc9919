//! Pulsed-ESR modelling for effective spin-1/2 Kramers ions with hyperfine structure.
//!
//! The crate is split along the physics:
//!
//! - [`spin`]: spin operators, the electron-nuclear spin Hamiltonian, its
//!   eigensystem, allowed transitions and their field sensitivity.
//! - [`powder`]: orientation sets and echo-detected field sweeps of polycrystals.
//! - [`sequence`]: pulse sequences, filter functions, toggling-frame scores,
//!   ratio-targeted sequence synthesis and Rabi nutation.
//! - [`decoherence`]: closed-form relaxation and spectral-diffusion models and a
//!   Monte Carlo spin-bath simulator.
//! - [`fitting`]: a bounded Levenberg-Marquardt engine, the relaxation fits built
//!   on it, and noise-spectrum reconstruction from CPMG coherence times.
//!
//! Energies are carried as frequencies (Hz, i.e. E/h) everywhere.

pub mod constants;
pub mod decoherence;
mod error;
pub mod fitting;
pub mod powder;
pub mod sequence;
pub mod spin;

pub use error::{Error, Result};
pub use nalgebra::{Rotation3, Vector3};

pub use decoherence::{BathSpec, SdParams, T1Params};
pub use fitting::{DecayTrace, FitResult, NoisePsd};
pub use powder::{FieldSpectrum, OrientationSet};
pub use sequence::{FilterFunction, Pulse, PulseSequence};
pub use spin::{FieldPoint, SpinSystem, Tensor, Transition};
