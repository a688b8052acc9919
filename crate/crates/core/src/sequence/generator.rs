use std::f64::consts::{FRAC_PI_2, PI};

use super::su2::{adjoint, rotation, Su2};
use super::toggling::toggling_frame;
use super::{make_sequence, Pulse, PulseSequence, SequenceKind};
use crate::{Error, Result};

/// Largest interaction-window count tried when matching a rational ratio.
const MAX_DENOMINATOR: u64 = 12;
/// Accepted relative deviation of the verified ratio from the target.
const RATIO_TOL: f64 = 0.05;

/// Synthesizes a sequence with the requested disorder-to-interaction ratio.
///
/// `ratio = inf` yields XY8 blocks. A finite ratio `p/q >= 3` is built from
/// interaction cycles of three equal-length dwells with the toggling frame
/// along three distinct axes; dwell `i` holds `k_i` disorder windows of
/// alternating sign, so each cycle contributes `sum k_i` disorder windows and
/// one interaction window. Dwells are joined by pi/2 frame changes and the
/// shortest interval equals `spacing`. As many cycles as the pulse budget
/// allows are used, and the result is checked with [`toggling_frame`].
pub fn generate_ratio_sequence(
    ratio: f64,
    spacing: f64,
    budget: usize,
    min_separation: f64,
) -> Result<PulseSequence> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::param("spacing", "must be positive"));
    }
    if spacing < min_separation * (1.0 - 1e-9) {
        return Err(Error::SpacingViolation {
            found: spacing,
            min: min_separation,
        });
    }
    if ratio.is_infinite() && ratio > 0.0 {
        let blocks = budget / 8;
        if blocks == 0 {
            return Err(Error::Infeasible(format!(
                "an XY8 block needs 8 pulses, budget is {budget}"
            )));
        }
        let seq = make_sequence(&SequenceKind::Xy8 { blocks, t_sep: spacing }, min_separation)?;
        return verify(seq.with_label("ratio-inf:1"), ratio);
    }
    if !(ratio >= 3.0 - 1e-12) || !ratio.is_finite() {
        return Err(Error::Infeasible(format!(
            "ratio {ratio}:1 is below 3:1; one interaction window needs dwells on three axes, each holding at least one disorder window"
        )));
    }
    let (p, q) = rational(ratio).ok_or_else(|| {
        Error::Infeasible(format!(
            "ratio {ratio} is not p/q with q <= {MAX_DENOMINATOR}"
        ))
    })?;

    let dwells = (3 * q) as usize;
    let counts: Vec<usize> = (0..dwells)
        .map(|i| (p / (3 * q)) as usize + usize::from((i as u64) < p % (3 * q)))
        .collect();
    let k_max = *counts.iter().max().unwrap();
    let dwell_len = 2.0 * k_max as f64 * spacing;
    let per_cycle: usize = counts.iter().map(|k| 2 * k - 1).sum::<usize>() + dwells;
    // the final frame change of the final cycle is not emitted
    let cycles = (budget + 1) / per_cycle;
    if cycles == 0 {
        return Err(Error::Infeasible(format!(
            "ratio {p}:{q} needs {} pulses per cycle, budget is {budget}",
            per_cycle - 1
        )));
    }

    let mut pulses = vec![Pulse::half_pi(0.0, 0.0)];
    let mut u = Su2::identity();
    let mut t = 0.0;
    let mut visited: Vec<usize> = vec![axis_of(&u)];
    for c in 0..cycles {
        for (d, &k) in counts.iter().enumerate() {
            let dt = dwell_len / (2 * k) as f64;
            for i in 0..2 * k {
                t += dt;
                if i + 1 < 2 * k {
                    let phase = if i % 2 == 0 { 0.0 } else { FRAC_PI_2 };
                    pulses.push(Pulse::pi(t, phase));
                    u = rotation(PI, phase) * u;
                }
            }
            let last = c + 1 == cycles && d + 1 == dwells;
            if last {
                break;
            }
            if visited.len() == 3 {
                visited.clear();
            }
            let current = axis_of(&u);
            let phase = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]
                .into_iter()
                .find(|&ph| {
                    let a = axis_of(&(rotation(FRAC_PI_2, ph) * u));
                    a != current && !visited.contains(&a)
                })
                .ok_or_else(|| Error::Infeasible("no unvisited frame axis reachable".into()))?;
            pulses.push(Pulse::half_pi(t, phase));
            u = rotation(FRAC_PI_2, phase) * u;
            if visited.is_empty() {
                visited.push(current);
            }
            visited.push(axis_of(&u));
        }
    }
    let seq = PulseSequence::new(pulses, t, format!("ratio-{p}:{q}"), Some(ratio))?;
    seq.check_separation(min_separation)?;
    verify(seq, ratio)
}

/// Axis (0, 1, 2) carrying the toggling-frame image of `Z`.
fn axis_of(u: &Su2) -> usize {
    let f = adjoint(u).row(2).transpose();
    f.iamax()
}

fn rational(r: f64) -> Option<(u64, u64)> {
    (1..=MAX_DENOMINATOR).find_map(|q| {
        let p = (r * q as f64).round();
        ((p / q as f64 - r).abs() <= 1e-9 * r).then_some((p as u64, q))
    })
}

fn verify(seq: PulseSequence, target: f64) -> Result<PulseSequence> {
    let tf = toggling_frame(&seq);
    let ok = match tf.ratio() {
        Some(r) if target.is_infinite() => r.is_infinite() && tf.disorder_score < 1e-9,
        Some(r) => r.is_finite() && (r / target - 1.0).abs() <= RATIO_TOL,
        None => false,
    };
    if ok {
        Ok(seq)
    } else {
        Err(Error::Infeasible(format!(
            "synthesized sequence verifies to {:?} instead of {target}",
            tf.ratio()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_ratios_verify() {
        for r in [3.0, 6.0, 9.0, 12.0] {
            let s = generate_ratio_sequence(r, 20e-6, 200, 10e-6).unwrap();
            let tf = toggling_frame(&s);
            assert_eq!(tf.ratio(), Some(r), "{r}");
            assert!(tf.disorder_score < 1e-9);
            assert!(tf.dipolar_average.norm() < 1e-9);
        }
    }

    #[test]
    fn uneven_and_rational_ratios() {
        for r in [4.0, 10.0, 4.5, 7.0 / 3.0 * 2.0] {
            let s = generate_ratio_sequence(r, 20e-6, 400, 10e-6).unwrap();
            let got = toggling_frame(&s).ratio().unwrap();
            assert!((got / r - 1.0).abs() < 1e-9, "{r} -> {got}");
        }
    }

    #[test]
    fn infinite_ratio_is_xy8() {
        let s = generate_ratio_sequence(f64::INFINITY, 20e-6, 16, 10e-6).unwrap();
        assert_eq!(s.pi_pulse_count(), 16);
        assert!(toggling_frame(&s).disorder_score < 1e-12);
    }

    #[test]
    fn rejects_infeasible() {
        assert!(matches!(
            generate_ratio_sequence(1.0, 20e-6, 100, 10e-6),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            generate_ratio_sequence(9.0, 20e-6, 5, 10e-6),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            generate_ratio_sequence(9.0, 5e-6, 100, 10e-6),
            Err(Error::SpacingViolation { .. })
        ));
    }

    #[test]
    fn deterministic() {
        let a = generate_ratio_sequence(9.0, 20e-6, 100, 10e-6).unwrap();
        let b = generate_ratio_sequence(9.0, 20e-6, 100, 10e-6).unwrap();
        assert_eq!(a, b);
    }
}
