use std::f64::consts::PI;

use crate::constants::MU_B_OVER_H;
use crate::{Error, Result};

/// Rabi frequency `g_t muB B1 / 2h` in Hz for a transverse g-factor `g_t`
/// and microwave field `B1` (T).
pub fn rabi_frequency(g_transverse: f64, b1: f64) -> f64 {
    g_transverse * MU_B_OVER_H * b1 / 2.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct RabiCurve {
    /// Hz.
    pub frequency: f64,
    /// s.
    pub pulse_lengths: Vec<f64>,
    /// Echo amplitude `sin^2(pi Omega t_p)`, between 0 and 1.
    pub amplitude: Vec<f64>,
}

/// Echo amplitude against refocusing-pulse length.
pub fn rabi_nutation(g_transverse: f64, b1: f64, pulse_lengths: &[f64]) -> Result<RabiCurve> {
    if !(b1 >= 0.0) || !b1.is_finite() {
        return Err(Error::param("b1", "must be non-negative"));
    }
    if !g_transverse.is_finite() {
        return Err(Error::param("g_transverse", "must be finite"));
    }
    let omega = rabi_frequency(g_transverse, b1);
    Ok(RabiCurve {
        frequency: omega,
        pulse_lengths: pulse_lengths.to_vec(),
        amplitude: pulse_lengths
            .iter()
            .map(|t| (PI * omega * t).sin().powi(2))
            .collect(),
    })
}
