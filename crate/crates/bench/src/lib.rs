//! Shared fixtures for the benchmarks.

use kramers_core::decoherence::stretched_exponential;
use kramers_core::powder::Site;
use kramers_core::{DecayTrace, SpinSystem, Tensor};

pub const F_PROBE: f64 = 5.67e9;

/// Effective spin-1/2 with the I = 7/2 nucleus of the odd isotope.
pub fn er167() -> SpinSystem {
    SpinSystem::new(
        0.5,
        3.5,
        Tensor::diagonal([12.2, 4.78, 1.64]),
        Tensor::diagonal([1.27e9, 0.50e9, 0.132e9]),
        Tensor::diagonal([-8e6, -4e6, 12e6]),
        -0.1618,
    )
    .expect("valid fixture")
}

pub fn zeeman_sites() -> Vec<Site> {
    vec![Site {
        label: "even".into(),
        fraction: 1.0,
        system: SpinSystem::zeeman_only(Tensor::diagonal([12.2, 4.78, 1.64])),
    }]
}

/// Noiseless Hahn decay with T2 = 1.5 ms and n = 1.8.
pub fn hahn_trace(points: usize) -> DecayTrace {
    let x: Vec<f64> = (0..points)
        .map(|k| 2e-5 + 4e-3 * k as f64 / (points - 1) as f64)
        .collect();
    let y = x.iter().map(|&t| stretched_exponential(t, 1.0, 1.5e-3, 1.8)).collect();
    DecayTrace::new(x, y, None).expect("valid fixture")
}
