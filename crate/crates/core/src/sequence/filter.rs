use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use super::su2::{adjoint, rotation, segments, Segment, Su2};
use super::PulseSequence;

/// Noise weighting of a sequence, `|int F(t) e^{i w t} dt|^2` in s^2, where
/// `F` is the part of the toggling-frame image of `Z` perpendicular to the
/// prepared state. For pi-pulse trains `F` is the familiar +-1 switching
/// function. Frequencies are in Hz, `w = 2 pi f`; only `f >= 0` is used with
/// `chi = (1/pi) int_0^inf S(w) weight(w) dw`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterFunction {
    pub frequencies: Vec<f64>,
    pub weight: Vec<f64>,
    /// Sequence length, s.
    pub total_time: f64,
    /// `int |F|^2 dt`, which equals `(1/pi) int_0^inf weight dw`, s.
    pub energy: f64,
}

impl FilterFunction {
    /// `(1/pi) int weight dw` over the sampled grid (trapezoid).
    pub fn parseval_integral(&self) -> f64 {
        let f = &self.frequencies;
        let w = &self.weight;
        (1..f.len())
            .map(|k| (f[k] - f[k - 1]) * (w[k] + w[k - 1]))
            .sum::<f64>()
    }
}

struct Prepared {
    segs: Vec<(f64, f64, Vector3<f64>)>,
    energy: f64,
}

fn prepare(seq: &PulseSequence) -> Prepared {
    let (segs, n0) = segments(seq);
    let segs: Vec<(f64, f64, Vector3<f64>)> = segs
        .iter()
        .map(|s: &Segment| {
            let f = s.z_image();
            (s.start, s.end, f - n0 * f.dot(&n0))
        })
        .collect();
    let energy = segs.iter().map(|(a, b, f)| (b - a) * f.norm_squared()).sum();
    Prepared { segs, energy }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn weight_at(p: &Prepared, omega: f64) -> f64 {
    let mut g = Vector3::<Complex64>::zeros();
    for (a, b, f) in &p.segs {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        let c = Complex64::from_polar(2.0 * h * sinc(omega * h), omega * m);
        g += f.map(|x| c * x);
    }
    g.iter().map(|z| z.norm_sqr()).sum()
}

/// Evaluates the filter weight on `frequencies` (Hz).
pub fn filter_function(seq: &PulseSequence, frequencies: &[f64]) -> FilterFunction {
    let p = prepare(seq);
    let weight = frequencies
        .par_iter()
        .map(|&f| weight_at(&p, 2.0 * PI * f))
        .collect();
    FilterFunction {
        frequencies: frequencies.to_vec(),
        weight,
        total_time: seq.total_time(),
        energy: p.energy,
    }
}

/// Uniform grid from 0 with step `1/(20 T)` up to `50 (J + 1)/T` where `J` is
/// the number of evolution pulses.
pub fn default_grid(seq: &PulseSequence) -> Vec<f64> {
    let t = seq.total_time();
    let j = seq.evolution_pulses().len() as f64;
    let df = 1.0 / (20.0 * t);
    let n = (1000.0 * (j + 1.0)).ceil() as usize;
    (0..=n).map(|k| k as f64 * df).collect()
}

const CHUNK: usize = 2048;

/// Weights at `k df`, `k < n`, using phase recurrences restarted every chunk.
pub(crate) fn uniform_weights(seq: &PulseSequence, df: f64, n: usize) -> Vec<f64> {
    let p = prepare(seq);
    let dw = 2.0 * PI * df;
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let chunks: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&k0| {
            let len = CHUNK.min(n - k0);
            let mut acc = vec![Vector3::<Complex64>::zeros(); len];
            for (a, b, f) in &p.segs {
                let h = 0.5 * (b - a);
                let m = 0.5 * (a + b);
                let w0 = k0 as f64 * dw;
                let mut em = Complex64::from_polar(1.0, w0 * m);
                let mut eh = Complex64::from_polar(1.0, w0 * h);
                let step_m = Complex64::from_polar(1.0, dw * m);
                let step_h = Complex64::from_polar(1.0, dw * h);
                for (i, slot) in acc.iter_mut().enumerate() {
                    let x = (k0 + i) as f64 * dw * h;
                    let s = if x.abs() < 1e-4 { 1.0 - x * x / 6.0 } else { eh.im / x };
                    let c = em * (2.0 * h * s);
                    *slot += f.map(|v| c * v);
                    em *= step_m;
                    eh *= step_h;
                }
            }
            acc.iter()
                .map(|g| g.iter().map(|z| z.norm_sqr()).sum())
                .collect()
        })
        .collect();
    chunks.concat()
}

/// `sum_{k<n} e^{i k phi}`.
fn phase_sum(phi: f64, n: usize) -> Complex64 {
    let nf = n as f64;
    let half = 0.5 * phi;
    let den = half.sin();
    let ratio = if den.abs() < 1e-12 {
        nf * (nf * half).cos() / half.cos()
    } else {
        (nf * half).sin() / den
    };
    Complex64::from_polar(ratio, (nf - 1.0) * half)
}

/// Axis and angle of a proper rotation matrix.
fn axis_angle(r: &Matrix3<f64>) -> (Vector3<f64>, f64) {
    let theta = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if skew.norm() > 1e-9 {
        return (skew.normalize(), theta);
    }
    if theta < 1.0 {
        return (Vector3::z(), 0.0);
    }
    // half turn: r = 2 u u^T - 1
    let uu = (r + Matrix3::identity()) / 2.0;
    let c = (0..3).max_by(|&a, &b| uu[(a, a)].total_cmp(&uu[(b, b)])).unwrap();
    (uu.column(c).normalize(), theta)
}

/// Weights at `k df`, `k < n`, of `cycle.repeated(repeats)` without
/// expanding it. In cycle `k` the image of `Z` is `R^k` applied to its image
/// in the first cycle, with `R` the transposed adjoint of the cycle's net
/// rotation. Writing `R` by axis and angle turns `sum_k e^{i w k T_c} R^k`
/// into three scalar geometric series.
pub(crate) fn repeated_weights(cycle: &PulseSequence, repeats: usize, df: f64, n: usize) -> Vec<f64> {
    let (segs, n0) = segments(cycle);
    let u = cycle
        .evolution_pulses()
        .iter()
        .fold(Su2::identity(), |u, p| rotation(p.angle, p.phase) * u);
    let (axis, theta) = axis_angle(&adjoint(&u).transpose());
    let parallel = axis * axis.transpose();
    let perp = Matrix3::identity() - parallel;
    let cross = axis.cross_matrix();
    let proj = Matrix3::identity() - n0 * n0.transpose();
    let tc = cycle.total_time();
    let segs: Vec<(f64, f64, Vector3<f64>)> = segs.iter().map(|s| (s.start, s.end, s.z_image())).collect();
    let cplx = |m: Matrix3<f64>| m.map(|v| Complex64::new(v, 0.0));
    let (parallel, perp, cross, proj) = (cplx(parallel), cplx(perp), cplx(cross), cplx(proj));
    (0..n)
        .into_par_iter()
        .map(|k| {
            let w = 2.0 * PI * df * k as f64;
            let mut g = Vector3::<Complex64>::zeros();
            for (a, b, f) in &segs {
                let h = 0.5 * (b - a);
                let c = Complex64::from_polar(2.0 * h * sinc(w * h), w * 0.5 * (a + b));
                g += f.map(|x| c * x);
            }
            let s0 = phase_sum(w * tc, repeats);
            let sp = phase_sum(w * tc + theta, repeats);
            let sm = phase_sum(w * tc - theta, repeats);
            let sum = parallel * s0 + perp * ((sp + sm) * 0.5) + cross * ((sp - sm) / Complex64::new(0.0, 2.0));
            (proj * (sum * g)).iter().map(|z| z.norm_sqr()).sum()
        })
        .collect()
}

/// Frequency (Hz) of the largest filter weight at `f > 0`, refined by golden
/// section search around the best point of a coarse scan.
pub fn center_frequency(seq: &PulseSequence) -> f64 {
    let p = prepare(seq);
    let (f, _) = locate_peak(seq, &p);
    f
}

/// Main passband of a sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Passband {
    /// Hz.
    pub center: f64,
    /// Full width at half maximum, Hz.
    pub fwhm: f64,
    /// Weight at the center, s^2.
    pub peak: f64,
}

pub fn passband(seq: &PulseSequence) -> Passband {
    let p = prepare(seq);
    let (center, peak) = locate_peak(seq, &p);
    let w = |f: f64| weight_at(&p, 2.0 * PI * f);
    let step = 1.0 / (64.0 * seq.total_time());
    let half = 0.5 * peak;
    let edge = |dir: f64| {
        let mut inner = center;
        let mut outer = center + dir * step;
        while outer > 0.0 && w(outer) > half {
            inner = outer;
            outer += dir * step;
        }
        if outer <= 0.0 {
            return 0.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (inner + outer);
            if w(mid) > half {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        0.5 * (inner + outer)
    };
    Passband {
        center,
        fwhm: edge(1.0) - edge(-1.0),
        peak,
    }
}

fn locate_peak(seq: &PulseSequence, p: &Prepared) -> (f64, f64) {
    let t = seq.total_time();
    let j = seq.evolution_pulses().len() as f64;
    let df = 1.0 / (8.0 * t);
    let n = (32.0 * (j + 1.0)).ceil() as usize;
    let w = |f: f64| weight_at(p, 2.0 * PI * f);
    let coarse: Vec<f64> = (1..=n).into_par_iter().map(|k| w(k as f64 * df)).collect();
    let (kbest, _) = coarse
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
    let fbest = (kbest + 1) as f64 * df;
    // golden section on [fbest - df, fbest + df]
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((fbest - df).max(0.0), fbest + df);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut wc, mut wd) = (w(c), w(d));
    for _ in 0..80 {
        if wc > wd {
            b = d;
            d = c;
            wd = wc;
            c = b - gr * (b - a);
            wc = w(c);
        } else {
            a = c;
            c = d;
            wc = wd;
            d = a + gr * (b - a);
            wd = w(d);
        }
    }
    let f = 0.5 * (a + b);
    let wf = w(f);
    if wf >= coarse[kbest] {
        (f, wf)
    } else {
        (fbest, coarse[kbest])
    }
}
