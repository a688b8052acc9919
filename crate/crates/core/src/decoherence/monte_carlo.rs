use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Cauchy, Distribution, Exp};
use rayon::prelude::*;

use crate::constants::{BOHR_MAGNETON, HBAR, MU_0};
use crate::fitting::DecayTrace;
use crate::sequence::{PulseSequence, TimeScaling};
use crate::{Error, Result};

/// Smallest trial count accepted by the simulator.
pub const MIN_TRIALS: usize = 1000;
/// Bath size used when couplings are drawn.
pub const DEFAULT_BATH_SPINS: usize = 50_000;

/// Fluctuating spin bath seen by the probe spin.
///
/// Bath spins reconfigure (take a fresh random orientation, so half of the
/// events are flips) at Poisson rate `rate`. Drawn couplings are Cauchy with
/// half-width `pi Gamma_SD / M` (rad/s) for `M` spins, which makes the total
/// detuning Lorentzian with FWHM `Gamma_SD`; as `M` grows the detuning
/// performs Lorentz diffusion.
#[derive(Clone, Debug, PartialEq)]
pub struct BathSpec {
    /// Hz.
    pub rate: f64,
    /// Hz.
    pub gamma_sd: f64,
    pub spins: usize,
    /// Explicit couplings in rad/s; replaces the drawn ones.
    pub couplings: Option<Vec<f64>>,
}

impl BathSpec {
    pub fn new(rate: f64, gamma_sd: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::param("rate", "must be positive"));
        }
        if !(gamma_sd > 0.0) || !gamma_sd.is_finite() {
            return Err(Error::param("gamma_sd", "must be positive"));
        }
        Ok(Self {
            rate,
            gamma_sd,
            spins: DEFAULT_BATH_SPINS,
            couplings: None,
        })
    }

    pub fn with_spins(mut self, spins: usize) -> Self {
        self.spins = spins;
        self
    }

    pub fn with_couplings(mut self, couplings: Vec<f64>) -> Self {
        self.couplings = Some(couplings);
        self
    }

    /// Secular dipolar couplings (rad/s) of spin-1/2 bath spins at
    /// `positions` (m, field along z) to a probe spin at the origin.
    pub fn couplings_from_positions(positions: &[[f64; 3]], g_probe: f64, g_env: f64) -> Vec<f64> {
        positions
            .iter()
            .map(|r| {
                let v = Vector3::from(*r);
                let d = v.norm();
                let cos = v.z / d;
                MU_0 * BOHR_MAGNETON * BOHR_MAGNETON * g_probe * g_env * (1.0 - 3.0 * cos * cos)
                    / (4.0 * PI * HBAR * d.powi(3))
                    / 2.0
            })
            .collect()
    }
}

/// Mean echo and its standard error per total time.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloDecay {
    pub trace: DecayTrace,
    pub std_error: Vec<f64>,
}

/// Piecewise-constant +-1 weighting of the detuning along the fixed dephasing axis.
struct SignFunction {
    bounds: Vec<f64>,
    /// Running integral at each bound.
    cumulative: Vec<f64>,
    signs: Vec<f64>,
}

impl SignFunction {
    fn new(seq: &PulseSequence) -> Result<Self> {
        let (segs, n0) = crate::sequence::frame_segments(seq);
        let mut axis: Option<Vector3<f64>> = None;
        let mut bounds = vec![0.0];
        let mut signs = Vec::new();
        let mut cumulative = vec![0.0];
        let mut last = 0.0;
        for s in &segs {
            let f = s.2 - n0 * s.2.dot(&n0);
            let sign = if f.norm() < 1e-9 {
                0.0
            } else {
                let a = *axis.get_or_insert(f.normalize());
                if f.cross(&a).norm() > 1e-9 {
                    return Err(Error::InvalidSequence(
                        "the dephasing axis changes direction; only sign-function sequences can be simulated".into(),
                    ));
                }
                f.dot(&a)
            };
            if s.0 > last {
                bounds.push(s.0);
                signs.push(0.0);
                cumulative.push(*cumulative.last().unwrap());
            }
            bounds.push(s.1);
            signs.push(sign);
            cumulative.push(cumulative.last().unwrap() + sign * (s.1 - s.0));
            last = s.1;
        }
        Ok(Self {
            bounds,
            cumulative,
            signs,
        })
    }

    fn end(&self) -> f64 {
        *self.bounds.last().unwrap()
    }

    /// `int_0^t f`.
    fn integral(&self, t: f64) -> f64 {
        if t >= self.end() {
            return *self.cumulative.last().unwrap();
        }
        let k = self.bounds.partition_point(|&b| b <= t).saturating_sub(1);
        self.cumulative[k] + self.signs[k] * (t - self.bounds[k])
    }
}

const CHUNK: usize = 128;

/// Echo decay of a probe spin in a fluctuating bath, averaged over `trials`
/// independent bath histories. Trial `k` uses stream `k` of a ChaCha8
/// generator seeded with `seed`, and trials are reduced in a fixed order, so
/// the result does not depend on the thread count.
pub fn sudden_jump_monte_carlo(
    bath: &BathSpec,
    seq: &PulseSequence,
    times: &[f64],
    scaling: TimeScaling,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloDecay> {
    if trials < MIN_TRIALS {
        return Err(Error::param("trials", format!("need at least {MIN_TRIALS}")));
    }
    if times.is_empty() {
        return Err(Error::param("times", "need at least one"));
    }
    let mut fns = Vec::with_capacity(times.len());
    let mut actual = Vec::with_capacity(times.len());
    for &t in times {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::param("time", "must be positive"));
        }
        let s = match scaling {
            TimeScaling::Stretch => seq.scaled(t / seq.total_time())?,
            TimeScaling::RepeatCycle => seq.repeated((t / seq.total_time()).round().max(1.0) as usize)?,
        };
        actual.push(s.total_time());
        fns.push(SignFunction::new(&s)?);
    }
    let t_max = actual.iter().cloned().fold(0.0, f64::max);
    let gamma = PI * bath.gamma_sd;
    let nt = times.len();

    let starts: Vec<usize> = (0..trials).step_by(CHUNK).collect();
    let partial: Vec<(Vec<f64>, Vec<f64>)> = starts
        .par_iter()
        .map(|&k0| {
            let mut sum = vec![0.0; nt];
            let mut sum2 = vec![0.0; nt];
            let mut history = Vec::new();
            for trial in k0..(k0 + CHUNK).min(trials) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(trial as u64);
                let mut phases = vec![0.0; nt];
                match &bath.couplings {
                    Some(c) => {
                        for &cpl in c {
                            spin_history(&mut rng, bath.rate, t_max, false, &mut history);
                            accumulate(&fns, cpl, &history, &mut phases);
                        }
                    }
                    None => {
                        let m = bath.spins as u64;
                        let p = -(-bath.rate * t_max).exp_m1();
                        let active = Binomial::new(m, p).map(|d| d.sample(&mut rng)).unwrap_or(0);
                        let quiet = (m - active) as f64 / m as f64;
                        if quiet > 0.0 {
                            let static_detuning = Cauchy::new(0.0, gamma * quiet).unwrap().sample(&mut rng);
                            for (ph, f) in phases.iter_mut().zip(&fns) {
                                *ph += static_detuning * f.integral(f.end());
                            }
                        }
                        let coupling = Cauchy::new(0.0, gamma / m as f64).unwrap();
                        for _ in 0..active {
                            let cpl = coupling.sample(&mut rng);
                            spin_history(&mut rng, bath.rate, t_max, true, &mut history);
                            accumulate(&fns, cpl, &history, &mut phases);
                        }
                    }
                }
                for j in 0..nt {
                    let c = phases[j].cos();
                    sum[j] += c;
                    sum2[j] += c * c;
                }
            }
            (sum, sum2)
        })
        .collect();

    let mut sum = vec![0.0; nt];
    let mut sum2 = vec![0.0; nt];
    for (s, s2) in partial {
        for j in 0..nt {
            sum[j] += s[j];
            sum2[j] += s2[j];
        }
    }
    let n = trials as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_error: Vec<f64> = (0..nt)
        .map(|j| ((sum2[j] / n - mean[j] * mean[j]).max(0.0) / (n - 1.0)).sqrt())
        .collect();
    // equal requested times collapse after rounding; keep the first
    let mut keep: Vec<usize> = (0..nt).collect();
    keep.sort_by(|&a, &b| actual[a].total_cmp(&actual[b]).then(a.cmp(&b)));
    keep.dedup_by(|a, b| actual[*a] == actual[*b]);
    let trace = DecayTrace::new(
        keep.iter().map(|&j| actual[j]).collect(),
        keep.iter().map(|&j| mean[j]).collect(),
        None,
    )?;
    let std_error = keep.iter().map(|&j| std_error[j]).collect();
    Ok(MonteCarloDecay { trace, std_error })
}

/// Orientation history `(start, end, b)` of one bath spin on `[0, t_max]`.
/// With `conditioned`, at least one reconfiguration is forced inside the window.
fn spin_history(
    rng: &mut ChaCha8Rng,
    rate: f64,
    t_max: f64,
    conditioned: bool,
    out: &mut Vec<(f64, f64, f64)>,
) {
    out.clear();
    let mut b = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let exp = Exp::new(rate).unwrap();
    let mut t = if conditioned {
        let p = -(-rate * t_max).exp_m1();
        let u: f64 = rng.random();
        -(-u * p).ln_1p() / rate
    } else {
        exp.sample(rng)
    };
    let mut start = 0.0;
    while t < t_max {
        out.push((start, t, b));
        start = t;
        b = if rng.random::<bool>() { 1.0 } else { -1.0 };
        t += exp.sample(rng);
    }
    out.push((start, t_max, b));
}

fn accumulate(fns: &[SignFunction], coupling: f64, history: &[(f64, f64, f64)], phases: &mut [f64]) {
    for (ph, f) in phases.iter_mut().zip(fns) {
        let end = f.end();
        let mut acc = 0.0;
        for &(a, b, s) in history {
            if a >= end {
                break;
            }
            acc += s * (f.integral(b.min(end)) - f.integral(a));
        }
        *ph += coupling * acc;
    }
}
