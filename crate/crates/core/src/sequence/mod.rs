//! Ideal pulse sequences, filter functions, toggling-frame scores, ratio
//! targeted sequence synthesis and Rabi nutation.

mod coherence;
mod filter;
mod generator;
mod rabi;
mod su2;
mod table;
mod toggling;

use std::f64::consts::{FRAC_PI_2, PI};

use crate::{Error, Result};

pub use coherence::{
    predict_coherence, CoherenceCurve, Lorentzian, NoiseSpectrum, TimeScaling, WhiteNoise,
    PSD_CONVENTION,
};
pub use filter::{center_frequency, default_grid, filter_function, passband, FilterFunction, Passband};
pub use generator::generate_ratio_sequence;
pub use rabi::{rabi_frequency, rabi_nutation, RabiCurve};
pub use table::{read_table, write_table};
pub use toggling::{toggling_frame, FrameInterval, TogglingFrame};

/// Toggling-frame intervals as `(start, end, image of Z)` and the prepared
/// Bloch vector.
pub(crate) fn frame_segments(
    seq: &PulseSequence,
) -> (Vec<(f64, f64, nalgebra::Vector3<f64>)>, nalgebra::Vector3<f64>) {
    let (segs, n0) = su2::segments(seq);
    (segs.iter().map(|s| (s.start, s.end, s.z_image())).collect(), n0)
}

/// Minimum spacing between consecutive pulses when none is configured, s.
pub const DEFAULT_MIN_SEPARATION: f64 = 10e-6;

/// An instantaneous rotation by `angle` about a transverse axis at azimuth `phase`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pulse {
    /// s.
    pub time: f64,
    /// rad.
    pub angle: f64,
    /// rad.
    pub phase: f64,
}

impl Pulse {
    pub fn new(time: f64, angle: f64, phase: f64) -> Self {
        Self { time, angle, phase }
    }

    pub fn pi(time: f64, phase: f64) -> Self {
        Self::new(time, PI, phase)
    }

    pub fn half_pi(time: f64, phase: f64) -> Self {
        Self::new(time, FRAC_PI_2, phase)
    }

    pub(crate) fn is_half_pi(&self) -> bool {
        (self.angle - FRAC_PI_2).abs() < 1e-9
    }
}

/// Disorder-to-interaction decoupling ratio; `f64::INFINITY` for pure
/// disorder decoupling.
pub type Ratio = f64;

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    pulses: Vec<Pulse>,
    total_time: f64,
    label: String,
    target_ratio: Option<Ratio>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SequenceKind {
    Hahn { tau: f64 },
    Cpmg { n: usize, t_sep: f64 },
    Xy8 { blocks: usize, t_sep: f64 },
    Stimulated { tau: f64, t_w: f64 },
    Custom {
        pulses: Vec<Pulse>,
        total_time: f64,
        ratio: Option<Ratio>,
    },
}

const XY8_PHASES: [f64; 8] = [0.0, FRAC_PI_2, 0.0, FRAC_PI_2, FRAC_PI_2, 0.0, FRAC_PI_2, 0.0];

/// Builds a sequence and checks it against `min_separation`. The preparation
/// pulse at `t = 0` is exempt; every later pair of consecutive pulses must be
/// at least `min_separation` apart.
pub fn make_sequence(kind: &SequenceKind, min_separation: f64) -> Result<PulseSequence> {
    let seq = match kind {
        SequenceKind::Hahn { tau } => {
            positive("tau", *tau)?;
            PulseSequence::new(
                vec![Pulse::half_pi(0.0, 0.0), Pulse::pi(*tau, 0.0)],
                2.0 * tau,
                "hahn",
                None,
            )?
        }
        SequenceKind::Cpmg { n, t_sep } => {
            positive("t_sep", *t_sep)?;
            if *n == 0 {
                return Err(Error::param("n", "need at least one pulse"));
            }
            PulseSequence::new(
                train(*n, *t_sep, |_| FRAC_PI_2),
                *n as f64 * t_sep,
                format!("cpmg-{n}"),
                None,
            )?
        }
        SequenceKind::Xy8 { blocks, t_sep } => {
            positive("t_sep", *t_sep)?;
            if *blocks == 0 {
                return Err(Error::param("blocks", "need at least one block"));
            }
            let n = 8 * blocks;
            PulseSequence::new(
                train(n, *t_sep, |k| XY8_PHASES[k % 8]),
                n as f64 * t_sep,
                format!("xy8-{blocks}"),
                Some(f64::INFINITY),
            )?
        }
        SequenceKind::Stimulated { tau, t_w } => {
            positive("tau", *tau)?;
            positive("t_w", *t_w)?;
            PulseSequence::new(
                vec![
                    Pulse::half_pi(0.0, 0.0),
                    Pulse::half_pi(*tau, 0.0),
                    Pulse::half_pi(tau + t_w, 0.0),
                ],
                2.0 * tau + t_w,
                "stimulated",
                None,
            )?
        }
        SequenceKind::Custom {
            pulses,
            total_time,
            ratio,
        } => PulseSequence::new(pulses.clone(), *total_time, "custom", *ratio)?,
    };
    seq.check_separation(min_separation)?;
    Ok(seq)
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be positive"))
    }
}

/// Preparation pulse at 0 followed by `n` pi pulses at `t/2 + k t`.
fn train(n: usize, t_sep: f64, phase: impl Fn(usize) -> f64) -> Vec<Pulse> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(Pulse::half_pi(0.0, 0.0));
    for k in 0..n {
        p.push(Pulse::pi(t_sep * (0.5 + k as f64), phase(k)));
    }
    p
}

impl PulseSequence {
    pub fn new(
        pulses: Vec<Pulse>,
        total_time: f64,
        label: impl Into<String>,
        target_ratio: Option<Ratio>,
    ) -> Result<Self> {
        for p in &pulses {
            if !(p.time >= 0.0) || !p.time.is_finite() {
                return Err(Error::InvalidSequence(format!("pulse time {} is negative", p.time)));
            }
            if !(p.angle > 0.0 && p.angle < 2.0 * PI) || !p.phase.is_finite() {
                return Err(Error::InvalidSequence(format!(
                    "pulse angle {} outside (0, 2 pi)",
                    p.angle
                )));
            }
        }
        if pulses.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::InvalidSequence("pulse times must strictly increase".into()));
        }
        if !total_time.is_finite() || pulses.last().is_some_and(|p| total_time < p.time) {
            return Err(Error::InvalidSequence(
                "total time precedes the last pulse".into(),
            ));
        }
        if !(total_time > 0.0) {
            return Err(Error::InvalidSequence("total time must be positive".into()));
        }
        Ok(Self {
            pulses,
            total_time,
            label: label.into(),
            target_ratio,
        })
    }

    pub fn hahn(tau: f64) -> Result<Self> {
        make_sequence(&SequenceKind::Hahn { tau }, DEFAULT_MIN_SEPARATION)
    }

    pub fn cpmg(n: usize, t_sep: f64) -> Result<Self> {
        make_sequence(&SequenceKind::Cpmg { n, t_sep }, DEFAULT_MIN_SEPARATION)
    }

    pub fn xy8(blocks: usize, t_sep: f64) -> Result<Self> {
        make_sequence(&SequenceKind::Xy8 { blocks, t_sep }, DEFAULT_MIN_SEPARATION)
    }

    pub fn stimulated(tau: f64, t_w: f64) -> Result<Self> {
        make_sequence(&SequenceKind::Stimulated { tau, t_w }, DEFAULT_MIN_SEPARATION)
    }

    /// No pulses: free evolution for `total_time`.
    pub fn free(total_time: f64) -> Result<Self> {
        Self::new(Vec::new(), total_time, "free", None)
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn target_ratio(&self) -> Option<Ratio> {
        self.target_ratio
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_target_ratio(mut self, ratio: Option<Ratio>) -> Self {
        self.target_ratio = ratio;
        self
    }

    /// Number of pi rotations.
    pub fn pi_pulse_count(&self) -> usize {
        self.pulses
            .iter()
            .filter(|p| (p.angle - PI).abs() < 1e-9)
            .count()
    }

    /// The leading pi/2 pulse at `t = 0`, if present.
    pub(crate) fn preparation(&self) -> Option<&Pulse> {
        self.pulses
            .first()
            .filter(|p| p.time == 0.0 && p.is_half_pi())
    }

    /// Pulses that act during the free evolution, i.e. all but the preparation.
    pub(crate) fn evolution_pulses(&self) -> &[Pulse] {
        match self.preparation() {
            Some(_) => &self.pulses[1..],
            None => &self.pulses,
        }
    }

    pub fn check_separation(&self, min_separation: f64) -> Result<()> {
        let p = self.evolution_pulses();
        for w in p.windows(2) {
            let gap = w[1].time - w[0].time;
            // relative slack for times assembled from sums
            if gap < min_separation * (1.0 - 1e-9) {
                return Err(Error::SpacingViolation {
                    found: gap,
                    min: min_separation,
                });
            }
        }
        Ok(())
    }

    /// All times multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let pulses = self
            .pulses
            .iter()
            .map(|p| Pulse::new(p.time * factor, p.angle, p.phase))
            .collect();
        Self::new(pulses, self.total_time * factor, self.label.clone(), self.target_ratio)
    }

    /// The evolution pulses repeated `n` times back to back, keeping the
    /// preparation pulse once.
    pub fn repeated(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("repeats", "need at least one"));
        }
        let mut pulses: Vec<Pulse> = self.preparation().into_iter().copied().collect();
        for k in 0..n {
            let off = k as f64 * self.total_time;
            pulses.extend(
                self.evolution_pulses()
                    .iter()
                    .map(|p| Pulse::new(p.time + off, p.angle, p.phase)),
            );
        }
        Self::new(pulses, n as f64 * self.total_time, self.label.clone(), self.target_ratio)
    }
}
