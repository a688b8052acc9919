//! Single-qubit rotations and the toggling-frame decomposition of a sequence.

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;

use super::PulseSequence;

pub(crate) type Su2 = Matrix2<Complex64>;

fn paulis() -> [Su2; 3] {
    let o = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [
        Su2::new(o, one, one, o),
        Su2::new(o, -i, i, o),
        Su2::new(one, o, o, -one),
    ]
}

/// `exp(-i angle/2 (cos(phase) X + sin(phase) Y))`.
pub(crate) fn rotation(angle: f64, phase: f64) -> Su2 {
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let [x, y, _] = paulis();
    Su2::identity() * Complex64::new(c, 0.0)
        - (x * Complex64::new(phase.cos(), 0.0) + y * Complex64::new(phase.sin(), 0.0))
            * Complex64::new(0.0, s)
}

/// `M[a][b] = tr(U^+ s_a U s_b) / 2`, the image of each Pauli operator in the
/// toggling frame.
pub(crate) fn adjoint(u: &Su2) -> Matrix3<f64> {
    let p = paulis();
    Matrix3::from_fn(|a, b| (u.adjoint() * p[a] * u * p[b]).trace().re / 2.0)
}

/// Bloch vector of `U |0><0| U^+`.
pub(crate) fn bloch_image_of_z(u: &Su2) -> Vector3<f64> {
    let p = paulis();
    Vector3::from_fn(|b, _| (u * p[2] * u.adjoint() * p[b]).trace().re / 2.0)
}

/// A free-evolution interval with constant toggling frame.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Segment {
    pub start: f64,
    pub end: f64,
    /// Adjoint matrix of the accumulated rotation.
    pub frame: Matrix3<f64>,
}

impl Segment {
    /// Image of the noise operator `Z`.
    pub fn z_image(&self) -> Vector3<f64> {
        self.frame.row(2).transpose()
    }
}

/// Frame segments between evolution pulses plus the prepared Bloch vector.
/// Without a leading pi/2 pulse the state is taken as prepared along x.
pub(crate) fn segments(seq: &PulseSequence) -> (Vec<Segment>, Vector3<f64>) {
    let prepared = match seq.preparation() {
        Some(p) => bloch_image_of_z(&rotation(p.angle, p.phase)),
        None => Vector3::x(),
    };
    let mut u = Su2::identity();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(seq.evolution_pulses().len() + 1);
    for p in seq.evolution_pulses() {
        if p.time > t {
            out.push(Segment {
                start: t,
                end: p.time,
                frame: adjoint(&u),
            });
        }
        u = rotation(p.angle, p.phase) * u;
        t = p.time;
    }
    if seq.total_time() > t {
        out.push(Segment {
            start: t,
            end: seq.total_time(),
            frame: adjoint(&u),
        });
    }
    (out, prepared)
}
