use std::f64::consts::PI;

use super::filter::{repeated_weights, uniform_weights};
use super::PulseSequence;
use crate::{Error, Result};

/// `chi = PSD_CONVENTION * int_0^inf S(w) weight(w) dw` with `S` one-sided in
/// rad^2/s and `weight` the filter weight in s^2. White noise of density `S0`
/// then decays as `exp(-S0 T)` for any pi-pulse sequence of length `T`.
pub const PSD_CONVENTION: f64 = 1.0 / PI;

/// One-sided noise power spectral density of the spin frequency.
pub trait NoiseSpectrum: Sync {
    /// Density at angular frequency `omega` (rad/s), in rad^2/s.
    fn density(&self, omega: f64) -> f64;

    /// Sampled frequency range in Hz; the density is zero outside it.
    fn coverage(&self) -> Option<(f64, f64)> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WhiteNoise {
    pub s0: f64,
}

impl NoiseSpectrum for WhiteNoise {
    fn density(&self, _omega: f64) -> f64 {
        self.s0
    }
}

/// `S(w) = s0 / (1 + (w / 2 pi f_c)^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lorentzian {
    pub s0: f64,
    /// Hz.
    pub cutoff: f64,
}

impl NoiseSpectrum for Lorentzian {
    fn density(&self, omega: f64) -> f64 {
        let x = omega / (2.0 * PI * self.cutoff);
        self.s0 / (1.0 + x * x)
    }
}

/// How a sequence is extended to a longer total time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeScaling {
    /// All pulse times scale with the total time.
    Stretch,
    /// The evolution pulses repeat at their original spacing; times round to
    /// whole repetitions (at least one).
    RepeatCycle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceCurve {
    /// Evolution times actually evaluated, s.
    pub times: Vec<f64>,
    pub chi: Vec<f64>,
    /// `exp(-chi)`.
    pub coherence: Vec<f64>,
    /// A noticeable part of the filter weight fell outside the PSD coverage.
    pub coverage_warning: bool,
}

/// Fraction of filter weight allowed outside the PSD coverage before warning.
const COVERAGE_TOL: f64 = 0.05;

/// Coherence `W(T) = exp(-chi(T))` of `seq` extended to each of `times`.
pub fn predict_coherence(
    seq: &PulseSequence,
    noise: &dyn NoiseSpectrum,
    times: &[f64],
    scaling: TimeScaling,
) -> Result<CoherenceCurve> {
    let mut out = CoherenceCurve {
        times: Vec::with_capacity(times.len()),
        chi: Vec::with_capacity(times.len()),
        coherence: Vec::with_capacity(times.len()),
        coverage_warning: false,
    };
    for &t in times {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::param("time", "must be positive"));
        }
        let (total, (chi, outside)) = match scaling {
            TimeScaling::Stretch => {
                let s = seq.scaled(t / seq.total_time())?;
                (s.total_time(), chi_of(&s, noise))
            }
            TimeScaling::RepeatCycle => {
                let n = (t / seq.total_time()).round().max(1.0) as usize;
                let j = n * seq.evolution_pulses().len();
                let total = n as f64 * seq.total_time();
                (total, chi_with(total, j, noise, |df, k| repeated_weights(seq, n, df, k)))
            }
        };
        if outside > COVERAGE_TOL {
            out.coverage_warning = true;
        }
        out.times.push(total);
        out.chi.push(chi);
        out.coherence.push((-chi).exp());
    }
    if out.coverage_warning {
        log::warn!("filter weight extends beyond the PSD coverage; the PSD is taken as zero there");
    }
    Ok(out)
}

/// `chi` and the fraction of filter weight outside the noise coverage.
pub(crate) fn chi_of(seq: &PulseSequence, noise: &dyn NoiseSpectrum) -> (f64, f64) {
    chi_with(seq.total_time(), seq.evolution_pulses().len(), noise, |df, n| {
        uniform_weights(seq, df, n)
    })
}

fn chi_with(
    t: f64,
    pulses: usize,
    noise: &dyn NoiseSpectrum,
    weights: impl FnOnce(f64, usize) -> Vec<f64>,
) -> (f64, f64) {
    let j = pulses as f64;
    let df = 1.0 / (16.0 * t);
    let mut f_max = 40.0 * (j + 1.0) / t;
    let coverage = noise.coverage();
    if let Some((_, hi)) = coverage {
        f_max = f_max.min(hi * 1.05);
    }
    let n = ((f_max / df).ceil() as usize).max(64) + 1;
    let w = weights(df, n);
    let mut chi = 0.0;
    let mut inside = 0.0;
    let mut total = 0.0;
    for (k, wk) in w.iter().enumerate() {
        let trap = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let f = k as f64 * df;
        chi += trap * noise.density(2.0 * PI * f) * wk;
        total += trap * wk;
        if coverage.is_none_or(|(lo, hi)| f >= lo && f <= hi) {
            inside += trap * wk;
        }
    }
    // (1/pi) int dw = 2 int df
    let chi = PSD_CONVENTION * 2.0 * PI * df * chi;
    let outside = if total > 0.0 { 1.0 - inside / total } else { 0.0 };
    (chi, outside)
}
