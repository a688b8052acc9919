use nalgebra::{Matrix3, Vector3};

use super::su2::segments;
use super::PulseSequence;

/// Relative tolerance for closing a decoupling window.
const WINDOW_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameInterval {
    pub start: f64,
    pub end: f64,
    /// Toggling-frame image of `Z` as coefficients of (X, Y, Z).
    pub z_image: Vector3<f64>,
}

/// Zeroth-order average Hamiltonian of a sequence in the toggling frame.
///
/// The leading pi/2 pulse, if any, prepares the state and is not part of the
/// frame. The like-spin secular dipolar coupling is normalized to
/// `ZZ - (XX + YY)/2`; under the frame it becomes
/// `J(t) = 3/2 F F^T - 1/2` with `F` the image of `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct TogglingFrame {
    pub intervals: Vec<FrameInterval>,
    /// `|<F>|`: 1 without pulses, 0 when static detuning is refocused.
    pub disorder_score: f64,
    /// Time-averaged dipolar coupling tensor.
    pub dipolar_average: Matrix3<f64>,
    /// ZZ coefficient of the average coupling (1 without pulses).
    pub zz_score: f64,
    /// Flip-flop coefficient of the average coupling, normalized to 1 without pulses.
    pub flip_flop_score: f64,
    /// Minimal back-to-back windows over which `int F dt` vanishes.
    pub disorder_windows: usize,
    /// Minimal back-to-back windows over which `int J dt` vanishes.
    pub interaction_windows: usize,
    /// Set when the anisotropic-g caveat applies: global pulses on an
    /// anisotropic effective spin cannot fully average the dipolar term, so
    /// the interaction scores are idealized.
    pub anisotropic_caveat: bool,
}

impl TogglingFrame {
    /// `disorder_windows / interaction_windows`; infinite when only disorder
    /// is decoupled and `None` when neither is.
    pub fn ratio(&self) -> Option<f64> {
        match (self.disorder_windows, self.interaction_windows) {
            (0, 0) => None,
            (_, 0) => Some(f64::INFINITY),
            (d, i) => Some(d as f64 / i as f64),
        }
    }
}

/// Decomposes `seq` into toggling-frame intervals and scores it. Any
/// rotation angle is accepted.
pub fn toggling_frame(seq: &PulseSequence) -> TogglingFrame {
    let (segs, _) = segments(seq);
    let total = seq.total_time();
    let intervals: Vec<FrameInterval> = segs
        .iter()
        .map(|s| FrameInterval {
            start: s.start,
            end: s.end,
            z_image: s.z_image(),
        })
        .collect();

    let mut mean_f = Vector3::zeros();
    let mut mean_ff = Matrix3::zeros();
    for iv in &intervals {
        let dt = iv.end - iv.start;
        mean_f += iv.z_image * dt;
        mean_ff += iv.z_image * iv.z_image.transpose() * dt;
    }
    mean_f /= total;
    mean_ff /= total;
    let dipolar_average = mean_ff * 1.5 - Matrix3::identity() * 0.5;
    let zz_score = dipolar_average[(2, 2)];
    let flip_flop_score = -(dipolar_average[(0, 0)] + dipolar_average[(1, 1)]);

    let disorder_windows = count_windows(&intervals, total, |f| {
        let v: Vec<f64> = f.iter().copied().collect();
        v
    });
    let interaction_windows = count_windows(&intervals, total, |f| {
        let j = f * f.transpose() - Matrix3::identity() / 3.0;
        j.iter().copied().collect()
    });

    TogglingFrame {
        intervals,
        disorder_score: mean_f.norm(),
        dipolar_average,
        zz_score,
        flip_flop_score,
        disorder_windows,
        interaction_windows,
        anisotropic_caveat: true,
    }
}

/// Greedy count of consecutive windows over which the running integral of
/// `rate(F)` returns to zero. The integral is piecewise linear, so a closure
/// inside an interval is found exactly.
fn count_windows(
    intervals: &[FrameInterval],
    total: f64,
    rate: impl Fn(&Vector3<f64>) -> Vec<f64>,
) -> usize {
    let tol = WINDOW_TOL * total;
    let mut count = 0;
    let mut acc: Option<Vec<f64>> = None;
    let mut opened = 0.0;
    for iv in intervals {
        let r = rate(&iv.z_image);
        let mut t = iv.start;
        loop {
            let a = acc.get_or_insert_with(|| {
                opened = t;
                vec![0.0; r.len()]
            });
            match closing_time(a, &r, iv.end - t, tol) {
                Some(s) if t + s - opened > tol => {
                    count += 1;
                    t += s;
                    acc = None;
                    if iv.end - t <= tol {
                        break;
                    }
                }
                _ => {
                    for (x, y) in a.iter_mut().zip(&r) {
                        *x += y * (iv.end - t);
                    }
                    break;
                }
            }
        }
    }
    count
}

/// Smallest `s` in `(0, len]` with `acc + s r = 0`, if any.
fn closing_time(acc: &[f64], r: &[f64], len: f64, tol: f64) -> Option<f64> {
    let r2: f64 = r.iter().map(|x| x * x).sum();
    if r2 == 0.0 {
        return None;
    }
    let s = -acc.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / r2;
    if s <= tol || s > len + tol {
        return None;
    }
    let resid: f64 = acc
        .iter()
        .zip(r)
        .map(|(a, b)| (a + s * b).powi(2))
        .sum::<f64>()
        .sqrt();
    (resid <= tol).then_some(s.min(len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::filter::filter_function;
    use crate::sequence::{Pulse, PulseSequence};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn free_evolution_scores() {
        let tf = toggling_frame(&PulseSequence::free(1e-3).unwrap());
        assert!((tf.disorder_score - 1.0).abs() < 1e-12);
        assert!((tf.zz_score - 1.0).abs() < 1e-12);
        assert!((tf.flip_flop_score - 1.0).abs() < 1e-12);
        assert_eq!(tf.ratio(), None);
    }

    #[test]
    fn xy8_is_infinite_to_one() {
        let tf = toggling_frame(&PulseSequence::xy8(2, 20e-6).unwrap());
        assert!(tf.disorder_score < 1e-12);
        assert!((tf.zz_score - 1.0).abs() < 1e-12);
        assert_eq!(tf.disorder_windows, 16);
        assert_eq!(tf.ratio(), Some(f64::INFINITY));
    }

    #[test]
    fn hahn_refocuses() {
        let tf = toggling_frame(&PulseSequence::hahn(10e-6).unwrap());
        assert!(tf.disorder_score < 1e-12);
        assert_eq!(tf.disorder_windows, 1);
    }

    #[test]
    fn disorder_score_is_filter_dc_limit() {
        let seqs = [
            PulseSequence::hahn(10e-6).unwrap(),
            PulseSequence::new(
                vec![Pulse::half_pi(0.0, 0.0), Pulse::pi(3e-5, 0.0), Pulse::pi(5e-5, 1.0)],
                1e-4,
                "uneven",
                None,
            )
            .unwrap(),
        ];
        for s in seqs {
            let tf = toggling_frame(&s);
            let dc = filter_function(&s, &[0.0]).weight[0].sqrt() / s.total_time();
            assert!((tf.disorder_score - dc).abs() < 1e-9);
        }
    }

    #[test]
    fn three_axis_dwell_decouples_interaction() {
        // Z for t, then frame changes to the two other axes
        let t = 20e-6;
        let s = PulseSequence::new(
            vec![
                Pulse::half_pi(0.0, 0.0),
                Pulse::half_pi(t, 0.0),
                Pulse::half_pi(2.0 * t, FRAC_PI_2),
            ],
            3.0 * t,
            "wahuha-like",
            None,
        )
        .unwrap();
        let tf = toggling_frame(&s);
        assert!(tf.dipolar_average.norm() < 1e-12);
        assert_eq!(tf.interaction_windows, 1);
    }
}
