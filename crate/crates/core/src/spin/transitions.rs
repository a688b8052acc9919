use nalgebra::{Matrix3, Vector3};

use super::eigen::{diagonalize_unchecked, eigenvalues_unchecked, Eigensystem};
use super::operators::CMatrix;
use super::tracking::{match_levels, relabel};
use super::{FieldPoint, SpinHamiltonian, SpinSystem};
use crate::constants::{K_B_OVER_H, MU_B_OVER_H};
use crate::{Error, Result};

/// Microwave drive direction used for transition matrix elements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DriveAxis {
    /// Fixed unit vector in the crystal frame.
    Fixed([f64; 3]),
    /// RMS over two orthogonal directions perpendicular to the static field.
    Transverse,
}

impl DriveAxis {
    fn operators(&self, ham: &SpinHamiltonian, field_dir: &Vector3<f64>) -> Vec<CMatrix> {
        match self {
            DriveAxis::Fixed(n) => {
                let n = Vector3::from(*n);
                let n = if n.norm() > 0.0 { n.normalize() } else { n };
                vec![ham.electron_operator(&n)]
            }
            DriveAxis::Transverse => {
                let (u, v) = transverse_basis(field_dir);
                vec![ham.electron_operator(&u), ham.electron_operator(&v)]
            }
        }
    }
}

pub(crate) fn transverse_basis(d: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let d = d.normalize();
    let helper = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
        Vector3::x()
    } else if d.y.abs() <= d.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u = d.cross(&helper).normalize();
    let v = d.cross(&u);
    (u, v)
}

fn drive_strength(eig: &Eigensystem, ops: &[CMatrix], lo: usize, hi: usize) -> f64 {
    let sum: f64 = ops
        .iter()
        .map(|op| eig.matrix_element(op, lo, hi).norm_sqr())
        .sum();
    (sum / ops.len() as f64).sqrt()
}

/// Thermal populations of each level.
pub fn boltzmann_populations(energies: &[f64], temperature: f64) -> Vec<f64> {
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let kt = K_B_OVER_H * temperature;
    let w: Vec<f64> = energies.iter().map(|e| (-(e - e0) / kt).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Electron spin polarization `tanh(g muB |B| / 2 kB T)` of a two-level spin.
pub fn polarization(g: f64, field: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::param("temperature", "must be positive"));
    }
    Ok((g.abs() * MU_B_OVER_H * field.abs() / (2.0 * K_B_OVER_H * temperature)).tanh())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionQuery {
    /// Probe frequency, Hz.
    pub f_probe: f64,
    /// Accepted `|gap - f_probe|`, Hz.
    pub window: f64,
    pub drive: DriveAxis,
    /// When set, the thermal population difference is filled in.
    pub temperature: Option<f64>,
}

impl TransitionQuery {
    pub fn new(f_probe: f64, window: f64) -> Result<Self> {
        if !(f_probe > 0.0) || !f_probe.is_finite() {
            return Err(Error::param("f_probe", "must be positive"));
        }
        if !(window >= 0.0) || !window.is_finite() {
            return Err(Error::param("window", "must be non-negative"));
        }
        Ok(Self {
            f_probe,
            window,
            drive: DriveAxis::Transverse,
            temperature: None,
        })
    }

    pub fn drive(mut self, drive: DriveAxis) -> Self {
        self.drive = drive;
        self
    }

    pub fn temperature(mut self, kelvin: f64) -> Self {
        self.temperature = Some(kelvin);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub level_lo: usize,
    pub level_hi: usize,
    /// Hz.
    pub frequency: f64,
    /// Gap derivative along the field direction, Hz/T.
    pub de_db: f64,
    /// `|dE/dB| h / muB`.
    pub g_eff: f64,
    /// `|<lo|S_drive|hi>|`.
    pub drive_strength: f64,
    /// Population difference `p_lo - p_hi`, when a temperature was given.
    pub thermal_weight: Option<f64>,
    pub sensitivity_flagged: bool,
}

/// All level pairs whose splitting lies within `window` of `f_probe`, sorted
/// by descending drive strength. Returns an empty list when nothing matches.
pub fn find_transitions(
    sys: &SpinSystem,
    field: &FieldPoint,
    query: &TransitionQuery,
) -> Result<Vec<Transition>> {
    sys.validate()?;
    let ham = SpinHamiltonian::new(sys);
    let eig = diagonalize_unchecked(&ham.at(field));
    let e = eig.energies();
    let ops = query.drive.operators(&ham, &field.direction());
    let pops = match query.temperature {
        Some(t) if t > 0.0 => Some(boltzmann_populations(e, t)),
        Some(_) => return Err(Error::param("temperature", "must be positive")),
        None => None,
    };
    let n = e.len();
    let mut out = Vec::new();
    for lo in 0..n {
        for hi in lo + 1..n {
            let gap = e[hi] - e[lo];
            if (gap - query.f_probe).abs() > query.window {
                continue;
            }
            let sens = sensitivity_with(&ham, field, &eig, lo, hi);
            out.push(Transition {
                level_lo: lo,
                level_hi: hi,
                frequency: gap,
                de_db: sens.de_db,
                g_eff: sens.g_eff,
                drive_strength: drive_strength(&eig, &ops, lo, hi),
                thermal_weight: pops.as_ref().map(|p| p[lo] - p[hi]),
                sensitivity_flagged: sens.near_degenerate || sens.inconsistent,
            });
        }
    }
    out.sort_by(|a, b| {
        b.drive_strength
            .total_cmp(&a.drive_strength)
            .then(a.level_lo.cmp(&b.level_lo))
            .then(a.level_hi.cmp(&b.level_hi))
    });
    Ok(out)
}

/// Finite-difference field derivative of one level gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSensitivity {
    /// Central difference with step `step`, Hz/T.
    pub de_db: f64,
    pub g_eff: f64,
    /// Field step, T.
    pub step: f64,
    /// Richardson extrapolation from steps `h` and `2h`.
    pub richardson: f64,
    /// `|D(h) - D(2h)| / |D(h)|`.
    pub richardson_rel_diff: f64,
    /// The two stencils disagree by more than `1e-3` relative.
    pub inconsistent: bool,
    /// Another level approaches one of the pair within the stencil.
    pub near_degenerate: bool,
    /// Worst eigenvector continuation overlap in the stencil.
    pub min_overlap: f64,
}

const RICHARDSON_TOL: f64 = 1e-3;

pub fn field_sensitivity(
    sys: &SpinSystem,
    field: &FieldPoint,
    level_lo: usize,
    level_hi: usize,
) -> Result<FieldSensitivity> {
    sys.validate()?;
    let dim = sys.dimension();
    if level_lo >= dim || level_hi >= dim || level_lo == level_hi {
        return Err(Error::LevelIndex(level_lo, level_hi, dim));
    }
    let ham = SpinHamiltonian::new(sys);
    let eig = diagonalize_unchecked(&ham.at(field));
    Ok(sensitivity_with(&ham, field, &eig, level_lo, level_hi))
}

fn sensitivity_with(
    ham: &SpinHamiltonian,
    field: &FieldPoint,
    base: &Eigensystem,
    lo: usize,
    hi: usize,
) -> FieldSensitivity {
    let b0 = field.magnitude();
    let dir = field.direction();
    let h = 1e-6f64.max(1e-4 * b0.abs());
    let mut min_overlap = 1.0f64;
    let mut tracked = |b: f64| {
        let eig = diagonalize_unchecked(&ham.at_vector(&(dir * b)));
        let m = match_levels(base.vectors(), &eig);
        min_overlap = min_overlap.min(m.min_overlap);
        relabel(&eig, &m).0
    };
    let p1 = tracked(b0 + h);
    let m1 = tracked(b0 - h);
    let p2 = tracked(b0 + 2.0 * h);
    let m2 = tracked(b0 - 2.0 * h);
    let gap = |e: &[f64]| e[hi] - e[lo];
    let d1 = (gap(&p1) - gap(&m1)) / (2.0 * h);
    let d2 = (gap(&p2) - gap(&m2)) / (4.0 * h);
    let richardson = (4.0 * d1 - d2) / 3.0;
    let floor = 1e-6 * MU_B_OVER_H;
    let rel = (d1 - d2).abs() / d1.abs().max(floor);

    let slopes: Vec<f64> = p1
        .iter()
        .zip(&m1)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect();
    let slope_scale = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let e = base.energies();
    let mut near = false;
    for &i in &[lo, hi] {
        for k in 0..e.len() {
            if k == i {
                continue;
            }
            let ds = (slopes[k] - slopes[i]).abs();
            if ds > 1e-7 * slope_scale && (e[k] - e[i]).abs() < 10.0 * h * ds {
                near = true;
            }
        }
    }
    if rel > RICHARDSON_TOL {
        log::warn!("dE/dB stencils disagree by {rel:.2e} for levels ({lo}, {hi})");
    }
    FieldSensitivity {
        de_db: d1,
        g_eff: d1.abs() / MU_B_OVER_H,
        step: h,
        richardson,
        richardson_rel_diff: rel,
        inconsistent: rel > RICHARDSON_TOL,
        near_degenerate: near,
        min_overlap,
    }
}

/// One resonance found on a field sweep at fixed direction and frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct Resonance {
    /// Field magnitude, T.
    pub field: f64,
    pub level_lo: usize,
    pub level_hi: usize,
    /// d(gap)/dB at resonance (Hellmann-Feynman), Hz/T.
    pub slope: f64,
    /// Gradient of the gap with respect to the field vector, Hz/T.
    pub gradient: Vector3<f64>,
    /// Second derivatives of the gap with respect to the field vector from
    /// second-order perturbation theory, Hz/T^2. Exactly degenerate partners
    /// are skipped.
    pub hessian: Matrix3<f64>,
    pub g_eff: f64,
    pub drive_strength: f64,
    /// `p_lo - p_hi`, or 1 when no temperature was given.
    pub thermal_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResonanceSearch {
    pub f_probe: f64,
    pub b_min: f64,
    pub b_max: f64,
    /// Bracketing samples along the sweep.
    pub samples: usize,
    pub drive: DriveAxis,
    pub temperature: Option<f64>,
}

impl ResonanceSearch {
    pub fn new(f_probe: f64, b_min: f64, b_max: f64) -> Self {
        Self {
            f_probe,
            b_min,
            b_max,
            samples: 96,
            drive: DriveAxis::Transverse,
            temperature: None,
        }
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn temperature(mut self, kelvin: Option<f64>) -> Self {
        self.temperature = kelvin;
        self
    }

    pub fn drive(mut self, drive: DriveAxis) -> Self {
        self.drive = drive;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.f_probe > 0.0) {
            return Err(Error::param("f_probe", "must be positive"));
        }
        if !(self.b_max > self.b_min) || !self.b_min.is_finite() || !self.b_max.is_finite() {
            return Err(Error::param("field range", "b_max must exceed b_min"));
        }
        if self.samples < 2 {
            return Err(Error::param("samples", "need at least two"));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0) {
                return Err(Error::param("temperature", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Fields along `direction` at which any level gap equals `f_probe`.
///
/// Roots are bracketed on the ascending-energy labelling; the set of gaps is
/// labelling-independent so crossings cannot hide a resonance.
pub fn resonance_fields(
    sys: &SpinSystem,
    direction: &Vector3<f64>,
    search: &ResonanceSearch,
) -> Result<Vec<Resonance>> {
    sys.validate()?;
    search.validate()?;
    let ham = SpinHamiltonian::new(sys);
    Ok(resonances_with(&ham, &direction.normalize(), search))
}

/// Gradient and Hessian of `E_hi - E_lo` with respect to the field vector.
fn gap_derivatives(eig: &Eigensystem, axes: &[CMatrix; 3], lo: usize, hi: usize) -> (Vector3<f64>, Matrix3<f64>) {
    let u = eig.vectors();
    let v: Vec<CMatrix> = axes.iter().map(|a| u.adjoint() * a * u).collect();
    let e = eig.energies();
    let scale = e.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let level = |k: usize| {
        let grad = Vector3::from_fn(|i, _| v[i][(k, k)].re);
        let mut hess = Matrix3::zeros();
        for m in 0..e.len() {
            let de = e[k] - e[m];
            if m == k || de.abs() <= 1e-12 * scale {
                continue;
            }
            for i in 0..3 {
                for j in i..3 {
                    let x = 2.0 * (v[i][(k, m)] * v[j][(m, k)]).re / de;
                    hess[(i, j)] += x;
                    if i != j {
                        hess[(j, i)] += x;
                    }
                }
            }
        }
        (grad, hess)
    };
    let (g_hi, h_hi) = level(hi);
    let (g_lo, h_lo) = level(lo);
    (g_hi - g_lo, h_hi - h_lo)
}

pub(crate) fn resonances_with(
    ham: &SpinHamiltonian,
    dir: &Vector3<f64>,
    search: &ResonanceSearch,
) -> Vec<Resonance> {
    let n = ham.dimension();
    let f = search.f_probe;
    let eval = |b: f64| eigenvalues_unchecked(&ham.at_vector(&(dir * b)));
    let fields: Vec<f64> = (0..search.samples)
        .map(|k| {
            search.b_min + (search.b_max - search.b_min) * k as f64 / (search.samples - 1) as f64
        })
        .collect();
    let spectra: Vec<Vec<f64>> = fields.iter().map(|&b| eval(b)).collect();

    let mut roots: Vec<(f64, usize, usize)> = Vec::new();
    for k in 0..fields.len() - 1 {
        let (ea, eb) = (&spectra[k], &spectra[k + 1]);
        for lo in 0..n {
            for hi in lo + 1..n {
                let ga = ea[hi] - ea[lo] - f;
                let gb = eb[hi] - eb[lo] - f;
                if ga == 0.0 {
                    roots.push((fields[k], lo, hi));
                } else if ga * gb < 0.0 {
                    let root = illinois(
                        |b| {
                            let e = eval(b);
                            e[hi] - e[lo] - f
                        },
                        fields[k],
                        fields[k + 1],
                        ga,
                        gb,
                    );
                    roots.push((root, lo, hi));
                }
            }
        }
    }
    // a root exactly on the final sample
    if let Some(last) = spectra.last() {
        for lo in 0..n {
            for hi in lo + 1..n {
                if last[hi] - last[lo] - f == 0.0 {
                    roots.push((*fields.last().unwrap(), lo, hi));
                }
            }
        }
    }

    let axes = [Vector3::x(), Vector3::y(), Vector3::z()].map(|e| ham.field_derivative(&e));
    let mut out = Vec::with_capacity(roots.len());
    for (b, lo, hi) in roots {
        let eig = diagonalize_unchecked(&ham.at_vector(&(dir * b)));
        let (gradient, hessian) = gap_derivatives(&eig, &axes, lo, hi);
        let slope = gradient.dot(dir);
        let ops = search.drive.operators(ham, dir);
        let thermal_weight = match search.temperature {
            Some(t) => {
                let p = boltzmann_populations(eig.energies(), t);
                p[lo] - p[hi]
            }
            None => 1.0,
        };
        out.push(Resonance {
            field: b,
            level_lo: lo,
            level_hi: hi,
            slope,
            gradient,
            hessian,
            g_eff: slope.abs() / MU_B_OVER_H,
            drive_strength: drive_strength(&eig, &ops, lo, hi),
            thermal_weight,
        });
    }
    out.sort_by(|a, b| a.field.total_cmp(&b.field));
    out
}

fn illinois(mut g: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, mut gb: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..100 {
        let c = (a * gb - b * ga) / (gb - ga);
        if (b - a).abs() < 1e-13 * (a.abs() + b.abs()).max(1e-3) {
            return c;
        }
        let gc = g(c);
        if gc == 0.0 {
            return c;
        }
        if gc * gb < 0.0 {
            a = b;
            ga = gb;
            b = c;
            gb = gc;
            side = 0;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if gc.abs() < 1e-4 {
            return c;
        }
    }
    (a * gb - b * ga) / (gb - ga)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::Tensor;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn planck_resonance(g: f64, f: f64) -> f64 {
        f / (g * MU_B_OVER_H)
    }

    #[test]
    fn isotropic_electron_single_transition() {
        let sys = SpinSystem::zeeman_only(Tensor::isotropic(2.0));
        let b = planck_resonance(2.0, 5.67e9);
        assert_relative_eq!(b, 0.2026, max_relative = 1e-3);
        let q = TransitionQuery::new(5.67e9, 1e6).unwrap();
        let found = find_transitions(&sys, &FieldPoint::along_z(b), &q).unwrap();
        assert_eq!(found.len(), 1);
        assert_abs_diff_eq!(found[0].drive_strength, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(found[0].g_eff, 2.0, epsilon = 1e-9);
        let fixed = q.drive(DriveAxis::Fixed([1.0, 0.0, 0.0]));
        let found = find_transitions(&sys, &FieldPoint::along_z(b), &fixed).unwrap();
        assert_abs_diff_eq!(found[0].drive_strength, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_window_detuned_is_empty() {
        let sys = SpinSystem::zeeman_only(Tensor::isotropic(2.0));
        let q = TransitionQuery::new(5.67e9, 0.0).unwrap();
        assert!(find_transitions(&sys, &FieldPoint::along_z(0.1), &q)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn zeeman_sensitivity_is_g_mu_b() {
        let sys = SpinSystem::zeeman_only(Tensor::diagonal([12.2, 4.78, 1.64]));
        let s = field_sensitivity(&sys, &FieldPoint::along_z(0.25), 0, 1).unwrap();
        assert_relative_eq!(s.g_eff, 1.64, max_relative = 1e-9);
        assert!(!s.near_degenerate && !s.inconsistent);
        let iso = SpinSystem::zeeman_only(Tensor::isotropic(2.0));
        for b in [1e-3, 0.05, 0.3, 2.0] {
            let s = field_sensitivity(&iso, &FieldPoint::along_z(b), 0, 1).unwrap();
            assert_relative_eq!(s.de_db, 27.99249e9, max_relative = 1e-9);
        }
    }

    #[test]
    fn sensitivity_rejects_bad_levels() {
        let sys = SpinSystem::zeeman_only(Tensor::isotropic(2.0));
        assert!(matches!(
            field_sensitivity(&sys, &FieldPoint::along_z(0.1), 0, 2),
            Err(Error::LevelIndex(..))
        ));
    }

    #[test]
    fn flags_crossing_inside_stencil() {
        // levels cross at B ~ 0.157 T (see tracking tests)
        let sys = SpinSystem::new(
            0.5,
            1.5,
            Tensor::isotropic(2.0),
            Tensor::zero(),
            Tensor::diagonal([-0.2e6, -0.2e6, 0.4e6]),
            1.0,
        )
        .unwrap();
        let cross = 1.2e6 / crate::constants::MU_N_OVER_H;
        let field = FieldPoint::along_z(cross + 1e-7);
        let flagged = (0..7).any(|k| {
            field_sensitivity(&sys, &field, k, k + 1)
                .unwrap()
                .near_degenerate
        });
        assert!(flagged);
        let far = FieldPoint::along_z(cross * 1.5);
        let s = field_sensitivity(&sys, &far, 0, 7).unwrap();
        assert!(!s.near_degenerate);
    }

    #[test]
    fn polarization_values() {
        assert_eq!(polarization(1.64, 0.0, 0.026).unwrap(), 0.0);
        assert!(polarization(1.64, 0.259, 0.0).is_err());
        assert!((polarization(0.4, 0.259, 0.026).unwrap() - 0.871).abs() < 1e-3);
        assert!((polarization(0.7, 0.259, 0.026).unwrap() - 0.981).abs() < 1e-3);
        assert!((polarization(1.64, 0.259, 0.026).unwrap() - 0.99996).abs() < 1e-3);
        assert_eq!(
            polarization(0.7, -0.259, 0.026).unwrap(),
            polarization(0.7, 0.259, 0.026).unwrap()
        );
    }

    #[test]
    fn resonance_search_finds_zeeman_field() {
        let sys = SpinSystem::zeeman_only(Tensor::diagonal([12.2, 4.78, 1.64]));
        let s = ResonanceSearch::new(5.67e9, 0.01, 0.4);
        let z = resonance_fields(&sys, &Vector3::z(), &s).unwrap();
        assert_eq!(z.len(), 1);
        assert_relative_eq!(z[0].field, planck_resonance(1.64, 5.67e9), max_relative = 1e-10);
        let x = resonance_fields(&sys, &Vector3::x(), &s).unwrap();
        assert_relative_eq!(x[0].field, planck_resonance(12.2, 5.67e9), max_relative = 1e-10);
    }
}
