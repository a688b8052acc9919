//! Orientation averaging and echo-detected field sweeps of polycrystals.

use nalgebra::{Matrix2, Matrix3x2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::spin::transitions::{resonances_with, Resonance, ResonanceSearch};
use crate::spin::{DriveAxis, SpinHamiltonian, SpinSystem};
use crate::{Error, Result};

/// Relative change in a normalized spectrum tolerated when the orientation
/// count is doubled, at the default counts used by the CLI.
pub const CONVERGENCE_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrientationScheme {
    /// Fibonacci spiral over the upper hemisphere.
    Grid,
    /// Halton (2, 3) points with a seeded Cranley-Patterson shift.
    QuasiRandom { seed: u64 },
}

/// Field directions in the crystal frame with equal weights. Only the upper
/// hemisphere is sampled: `B` and `-B` give the same spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientationSet {
    directions: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    scheme: OrientationScheme,
    cell_radius: f64,
}

impl OrientationSet {
    pub fn new(n: usize, scheme: OrientationScheme) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("orientations", "need at least one"));
        }
        let directions: Vec<Vector3<f64>> = match scheme {
            OrientationScheme::Grid => {
                let golden = (1.0 + 5f64.sqrt()) / 2.0;
                (0..n)
                    .map(|k| {
                        let z = 1.0 - (k as f64 + 0.5) / n as f64;
                        let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
                        from_z_phi(z, phi)
                    })
                    .collect()
            }
            OrientationScheme::QuasiRandom { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (s1, s2): (f64, f64) = (rng.random(), rng.random());
                (0..n)
                    .map(|k| {
                        let z = (radical_inverse(k as u64 + 1, 2) + s1).fract();
                        let v = (radical_inverse(k as u64 + 1, 3) + s2).fract();
                        from_z_phi(z, 2.0 * std::f64::consts::PI * v)
                    })
                    .collect()
            }
        };
        let n = directions.len();
        Ok(Self {
            directions,
            weights: vec![1.0 / n as f64; n],
            scheme,
            cell_radius: (2.0 / n as f64).sqrt(),
        })
    }

    pub fn grid(n: usize) -> Result<Self> {
        Self::new(n, OrientationScheme::Grid)
    }

    pub fn quasi_random(n: usize, seed: u64) -> Result<Self> {
        Self::new(n, OrientationScheme::QuasiRandom { seed })
    }

    /// A single direction with weight 1.
    pub fn single(direction: Vector3<f64>) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::param("direction", "must be a nonzero finite vector"));
        }
        Ok(Self {
            directions: vec![direction / norm],
            weights: vec![1.0],
            scheme: OrientationScheme::Grid,
            cell_radius: 0.0,
        })
    }

    /// Applies the same rotation to every direction.
    pub fn rotated(&self, rotation: &nalgebra::Rotation3<f64>) -> Self {
        Self {
            directions: self.directions.iter().map(|d| rotation * d).collect(),
            weights: self.weights.clone(),
            scheme: self.scheme,
            cell_radius: self.cell_radius,
        }
    }

    /// Angular radius (rad) of the disk with the solid angle each direction
    /// stands for on the hemisphere; zero for a single direction.
    pub fn cell_radius(&self) -> f64 {
        self.cell_radius
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vector3<f64>] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scheme(&self) -> OrientationScheme {
        self.scheme
    }
}

fn from_z_phi(z: f64, phi: f64) -> Vector3<f64> {
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

/// One paramagnetic site in the sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Site {
    pub label: String,
    /// Relative abundance; fractions are used as given.
    pub fraction: f64,
    pub system: SpinSystem,
}

/// Transitions grouped by effective g at resonance, `g_lo <= g_eff <= g_hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct GGroup {
    pub label: String,
    pub g_lo: f64,
    pub g_hi: f64,
}

impl GGroup {
    pub fn new(label: impl Into<String>, g_lo: f64, g_hi: f64) -> Self {
        Self {
            label: label.into(),
            g_lo,
            g_hi,
        }
    }

    fn contains(&self, g: f64) -> bool {
        g >= self.g_lo && g <= self.g_hi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchAnnotation {
    pub label: String,
    /// T.
    pub b_min: f64,
    pub b_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdfsParams {
    pub f_probe: f64,
    /// Half-width of the excited band around `f_probe`, Hz.
    pub bandwidth: f64,
    /// `None` weights every transition by 1 instead of its population difference.
    pub temperature: Option<f64>,
    pub drive: DriveAxis,
    /// Bracketing samples per orientation for the resonance search.
    pub bracket_samples: usize,
    pub groups: Vec<GGroup>,
}

impl EdfsParams {
    pub fn new(f_probe: f64, bandwidth: f64) -> Self {
        Self {
            f_probe,
            bandwidth,
            temperature: None,
            drive: DriveAxis::Transverse,
            bracket_samples: 64,
            groups: Vec::new(),
        }
    }

    /// `1 / (pi t_p)`.
    pub fn bandwidth_for_pulse(pulse_length: f64) -> f64 {
        1.0 / (std::f64::consts::PI * pulse_length)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSpectrum {
    /// T, strictly increasing.
    pub fields: Vec<f64>,
    /// Normalized to a maximum of 1 (all zero if nothing resonates).
    pub amplitude: Vec<f64>,
    pub branches: Vec<BranchAnnotation>,
}

impl FieldSpectrum {
    /// Indices of grid points carrying nonzero amplitude.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.amplitude.iter().position(|&a| a > 0.0)?;
        let last = self.amplitude.iter().rposition(|&a| a > 0.0)?;
        Some((self.fields[first], self.fields[last]))
    }

    pub fn max_abs_difference(&self, other: &FieldSpectrum) -> f64 {
        self.amplitude
            .iter()
            .zip(&other.amplitude)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Uniform grid of `n` fields from `lo` to `hi`.
pub fn field_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(hi > lo) {
        return Err(Error::param("field grid", "need n >= 2 and hi > lo"));
    }
    Ok((0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect())
}

const CHUNK: usize = 32;

/// Points per orientation cell; see [`edfs`].
const CELL_SAMPLES: usize = 64;

/// Equal-area sunflower points in the unit disk.
fn disk_samples(n: usize) -> Vec<Vector2<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let rho = ((k as f64 + 0.5) / n as f64).sqrt();
            let phi = golden * k as f64;
            Vector2::new(rho * phi.cos(), rho * phi.sin())
        })
        .collect()
}

/// Model of the resonance field across the cell around `n0`, for tangent
/// displacements `u` (rad, gnomonic: `n = normalize(n0 + u)`).
///
/// The quantity `w(u) = (1 + |u|^2) / B(u)^2` is expanded to second order.
/// For a pure Zeeman resonance `w` is exactly quadratic, so the model is exact
/// at any cell size and never overshoots a turning point.
struct CellModel {
    b0: f64,
    w0: f64,
    w1: Vector2<f64>,
    w2: Matrix2<f64>,
}

impl CellModel {
    /// Implicit differentiation of `gap(B(n) n) = f_probe` using the gap
    /// gradient and Hessian at resonance gives `B = b0 + beta.u + u^T m u / 2`,
    /// which is then converted to `w`.
    fn new(r: &Resonance, n0: &Vector3<f64>) -> Self {
        let seed = if n0.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (seed - n0 * seed.dot(n0)).normalize();
        let e2 = n0.cross(&e1);
        let b0 = r.field;
        let s = r.slope;
        let gt = Vector2::new(r.gradient.dot(&e1), r.gradient.dot(&e2));
        let beta = -gt * (b0 / s);
        let mut j = Matrix3x2::from_columns(&[e1 * b0, e2 * b0]);
        j += n0 * beta.transpose();
        let m = Matrix2::identity() * b0 - (beta * gt.transpose() + gt * beta.transpose()) / s
            - j.transpose() * r.hessian * j / s;
        let w0 = 1.0 / (b0 * b0);
        Self {
            b0,
            w0,
            w1: beta * (-2.0 * w0 / b0),
            w2: (Matrix2::identity() - m / b0 + beta * beta.transpose() * (3.0 / (b0 * b0))) * w0,
        }
    }

    /// False when the curvature is implausibly large for the cell, which
    /// happens next to avoided crossings where the expansion breaks down.
    fn trusted(&self, radius: f64) -> bool {
        let q = radius * radius * (self.w2 / self.w0).symmetric_eigenvalues().amax();
        q.is_finite() && q <= 2.0
    }

    fn field(&self, u: &Vector2<f64>) -> Option<f64> {
        let w = self.w0 + self.w1.dot(u) + u.dot(&(self.w2 * u));
        (w > 0.0).then(|| ((1.0 + u.norm_squared()) / w).sqrt())
    }

    /// Fields at the cell samples, or the center alone if the model is not
    /// trusted anywhere in the cell.
    fn fields(&self, disk: &[Vector2<f64>], radius: f64) -> Vec<f64> {
        if self.trusted(radius) {
            if let Some(b) = disk.iter().map(|u| self.field(u)).collect::<Option<Vec<f64>>>() {
                return b;
            }
        }
        vec![self.b0]
    }
}

/// Echo-detected field sweep.
///
/// Every resonance deposits `weight * fraction * drive^2 * population
/// difference` over the fields where its gap lies within `bandwidth` of
/// `f_probe`. Each direction stands for a disk of solid angle on the sphere;
/// the resonance field is expanded to second order across that disk and the
/// deposit is spread over [`CELL_SAMPLES`] points of it, so narrow excitation
/// bands do not turn the pattern into a comb. Deposits are averaged over each
/// grid cell, so the support can reach half a cell beyond the excited band.
pub fn edfs(
    sites: &[Site],
    fields: &[f64],
    orientations: &OrientationSet,
    params: &EdfsParams,
) -> Result<FieldSpectrum> {
    if fields.len() < 2 || fields.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("field grid", "must be strictly increasing with >= 2 points"));
    }
    if !(params.bandwidth > 0.0) {
        return Err(Error::param("bandwidth", "must be positive"));
    }
    if sites.is_empty() {
        return Err(Error::param("sites", "need at least one"));
    }
    for s in sites {
        s.system.validate()?;
        if !(s.fraction >= 0.0) {
            return Err(Error::param("fraction", "must be non-negative"));
        }
    }
    let edges = cell_edges(fields);
    let span = fields[fields.len() - 1] - fields[0];
    let lo = (fields[0] - 0.02 * span).max(0.0);
    let hi = fields[fields.len() - 1] + 0.02 * span;
    let search = ResonanceSearch::new(params.f_probe, lo, hi)
        .samples(params.bracket_samples.max(2))
        .temperature(params.temperature)
        .drive(params.drive);

    let hams: Vec<SpinHamiltonian> = sites.iter().map(|s| SpinHamiltonian::new(&s.system)).collect();
    let dirs = orientations.directions();
    let weights = orientations.weights();
    let radius = orientations.cell_radius();
    let disk: Vec<Vector2<f64>> = if radius > 0.0 {
        disk_samples(CELL_SAMPLES).into_iter().map(|u| u * radius).collect()
    } else {
        vec![Vector2::zeros()]
    };
    let idx: Vec<usize> = (0..dirs.len()).collect();

    let partials: Vec<(Vec<f64>, Vec<(f64, f64)>)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; fields.len()];
            let mut extents = vec![(f64::INFINITY, f64::NEG_INFINITY); params.groups.len()];
            for &o in chunk {
                for (site, ham) in sites.iter().zip(&hams) {
                    let res = resonances_with(ham, &dirs[o], &search);
                    for r in &res {
                        let height = weights[o] * site.fraction * r.drive_strength.powi(2) * r.thermal_weight;
                        if height != 0.0 && r.slope != 0.0 {
                            let half = params.bandwidth / r.slope.abs();
                            let samples = CellModel::new(r, &dirs[o]).fields(&disk, radius);
                            let h = height / samples.len() as f64;
                            for b in samples {
                                deposit(&mut acc, &edges, b - half, b + half, h);
                            }
                        }
                    }
                    update_extents(&mut extents, &params.groups, &res);
                }
            }
            (acc, extents)
        })
        .collect();

    let mut amplitude = vec![0.0; fields.len()];
    let mut extents = vec![(f64::INFINITY, f64::NEG_INFINITY); params.groups.len()];
    for (acc, ext) in partials {
        for (a, x) in amplitude.iter_mut().zip(acc) {
            *a += x;
        }
        for (e, x) in extents.iter_mut().zip(ext) {
            e.0 = e.0.min(x.0);
            e.1 = e.1.max(x.1);
        }
    }
    let peak = amplitude.iter().copied().fold(0.0f64, f64::max);
    if peak > 0.0 {
        amplitude.iter_mut().for_each(|a| *a = (*a / peak).max(0.0));
    } else {
        log::warn!("no resonances in the requested field range");
    }
    let branches = params
        .groups
        .iter()
        .zip(extents)
        .filter(|(_, e)| e.0.is_finite())
        .map(|(g, e)| BranchAnnotation {
            label: g.label.clone(),
            b_min: e.0,
            b_max: e.1,
        })
        .collect();
    Ok(FieldSpectrum {
        fields: fields.to_vec(),
        amplitude,
        branches,
    })
}

/// Allowed-transition cutoff relative to the strongest resonance of an orientation.
const BRANCH_DRIVE_FRACTION: f64 = 1e-2;

fn update_extents(extents: &mut [(f64, f64)], groups: &[GGroup], res: &[Resonance]) {
    let strongest = res.iter().map(|r| r.drive_strength).fold(0.0f64, f64::max);
    for r in res {
        if r.drive_strength < BRANCH_DRIVE_FRACTION * strongest || strongest == 0.0 {
            continue;
        }
        for (e, g) in extents.iter_mut().zip(groups) {
            if g.contains(r.g_eff) {
                e.0 = e.0.min(r.field);
                e.1 = e.1.max(r.field);
            }
        }
    }
}

/// Lowest and highest resonance field of the transitions in `group` over all
/// orientations, searched in `[b_min, b_max]`. Transitions much weaker than the
/// strongest one at the same orientation are ignored.
pub fn branch_extent(
    sys: &SpinSystem,
    f_probe: f64,
    group: &GGroup,
    orientations: &OrientationSet,
    field_range: (f64, f64),
) -> Result<(f64, f64)> {
    sys.validate()?;
    let search = ResonanceSearch::new(f_probe, field_range.0, field_range.1).samples(64);
    let ham = SpinHamiltonian::new(sys);
    let ext = orientations
        .directions()
        .par_iter()
        .map(|d| {
            let mut e = [(f64::INFINITY, f64::NEG_INFINITY)];
            update_extents(&mut e, std::slice::from_ref(group), &resonances_with(&ham, d, &search));
            e[0]
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        );
    if ext.0.is_finite() {
        Ok(ext)
    } else {
        Err(Error::GroupNotFound {
            lo: group.g_lo,
            hi: group.g_hi,
        })
    }
}

fn cell_edges(fields: &[f64]) -> Vec<f64> {
    let n = fields.len();
    let mut e = Vec::with_capacity(n + 1);
    e.push(fields[0] - 0.5 * (fields[1] - fields[0]));
    for w in fields.windows(2) {
        e.push(0.5 * (w[0] + w[1]));
    }
    e.push(fields[n - 1] + 0.5 * (fields[n - 1] - fields[n - 2]));
    e
}

fn deposit(acc: &mut [f64], edges: &[f64], a: f64, b: f64, height: f64) {
    let n = acc.len();
    if b <= edges[0] || a >= edges[n] {
        return;
    }
    let start = edges.partition_point(|&e| e <= a).saturating_sub(1);
    for j in start..n {
        let (lo, hi) = (edges[j], edges[j + 1]);
        if lo >= b {
            break;
        }
        let overlap = hi.min(b) - lo.max(a);
        if overlap > 0.0 {
            acc[j] += height * overlap / (hi - lo);
        }
    }
}
