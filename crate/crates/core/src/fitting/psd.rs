use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::constants::{BOHR_MAGNETON, HBAR};
use crate::sequence::{CoherenceCurve, NoiseSpectrum, PulseSequence};
use crate::{Error, Result};

/// Below this many pi pulses the filter passband is too broad for a
/// single-frequency reading.
pub const MIN_RECONSTRUCTION_PULSES: usize = 8;

/// One CPMG measurement: the sequence at its measured `T2` (s).
#[derive(Clone, Debug, PartialEq)]
pub struct CpmgRun {
    pub sequence: PulseSequence,
    pub t2: f64,
    pub label: String,
}

/// Sampled one-sided frequency-noise PSD. Linear interpolation between
/// samples, zero outside them.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePsd {
    /// Hz, strictly increasing.
    pub frequencies: Vec<f64>,
    /// rad^2/s.
    pub density: Vec<f64>,
    /// Source label per sample.
    pub provenance: Vec<String>,
    pub warnings: Vec<String>,
}

impl NoisePsd {
    pub fn new(frequencies: Vec<f64>, density: Vec<f64>, provenance: Vec<String>) -> Result<Self> {
        if frequencies.is_empty()
            || frequencies.len() != density.len()
            || provenance.len() != frequencies.len()
        {
            return Err(Error::InvalidTrace("PSD columns differ in length or are empty".into()));
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) || !(frequencies[0] > 0.0) {
            return Err(Error::InvalidTrace(
                "PSD frequencies must be positive and strictly increasing".into(),
            ));
        }
        if density.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidTrace("PSD density must be non-negative".into()));
        }
        Ok(Self {
            frequencies,
            density,
            provenance,
            warnings: Vec::new(),
        })
    }

    /// Density at `f` Hz.
    pub fn at(&self, f: f64) -> f64 {
        let fs = &self.frequencies;
        if f < fs[0] || f > fs[fs.len() - 1] {
            return 0.0;
        }
        let k = fs.partition_point(|x| *x <= f);
        if k == 0 {
            return self.density[0];
        }
        if k == fs.len() {
            return self.density[k - 1];
        }
        let u = (f - fs[k - 1]) / (fs[k] - fs[k - 1]);
        self.density[k - 1] + u * (self.density[k] - self.density[k - 1])
    }

    /// Magnetic-field PSD in T^2 s for a spin with effective g factor `g`.
    pub fn field_psd(&self, g: f64) -> Result<Vec<f64>> {
        if !(g > 0.0) {
            return Err(Error::param("g", "must be positive"));
        }
        let gamma = g * BOHR_MAGNETON / HBAR;
        Ok(self.density.iter().map(|s| s / (gamma * gamma)).collect())
    }

    /// Reads `frequency_hz,density_rad2_per_s[,source]`.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("frequency_hz") || headers.get(1) != Some("density_rad2_per_s") {
            return Err(Error::Parse {
                line: 1,
                reason: "expected header `frequency_hz,density_rad2_per_s[,source]`".into(),
            });
        }
        let (mut f, mut s, mut src) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let num = |k: usize| -> Result<f64> {
                let field = rec.get(k).ok_or(Error::Parse {
                    line,
                    reason: "missing column".into(),
                })?;
                field.parse().map_err(|_| Error::Parse {
                    line,
                    reason: format!("`{field}` is not a number"),
                })
            };
            f.push(num(0)?);
            s.push(num(1)?);
            src.push(rec.get(2).unwrap_or("").to_string());
        }
        Self::new(f, s, src)
    }

    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frequency_hz", "density_rad2_per_s", "source"])?;
        for i in 0..self.frequencies.len() {
            w.write_record([
                format!("{:.12e}", self.frequencies[i]),
                format!("{:.12e}", self.density[i]),
                self.provenance[i].clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl NoiseSpectrum for NoisePsd {
    fn density(&self, omega: f64) -> f64 {
        self.at(omega / (2.0 * PI))
    }

    fn coverage(&self) -> Option<(f64, f64)> {
        Some((self.frequencies[0], self.frequencies[self.frequencies.len() - 1]))
    }
}

/// Pulse spacing of a uniform pi-pulse train (pulses at `t/2 + k t`, total
/// `N t`).
fn uniform_spacing(seq: &PulseSequence) -> Result<(usize, f64)> {
    let pulses = seq.evolution_pulses();
    let n = pulses.len();
    if n == 0 || pulses.iter().any(|p| (p.angle - PI).abs() > 1e-9) {
        return Err(Error::InvalidSequence(format!(
            "`{}` is not a pi-pulse train",
            seq.label()
        )));
    }
    let t = seq.total_time() / n as f64;
    let tol = 1e-6 * t;
    let uniform = pulses
        .iter()
        .enumerate()
        .all(|(k, p)| (p.time - t * (0.5 + k as f64)).abs() <= tol);
    if !uniform {
        return Err(Error::InvalidSequence(format!(
            "`{}` does not have uniform pulse spacing",
            seq.label()
        )));
    }
    Ok((n, t))
}

/// Reads one PSD sample per CPMG run: the filter peaks at `1/(2 t)` and a
/// flat spectrum across the passband gives `S = pi^2 / (8 T2)`.
pub fn reconstruct_psd(runs: &[CpmgRun]) -> Result<NoisePsd> {
    if runs.is_empty() {
        return Err(Error::InvalidTrace("no CPMG runs".into()));
    }
    let mut samples = Vec::with_capacity(runs.len());
    let mut warnings = Vec::new();
    for run in runs {
        if !(run.t2 > 0.0) || !run.t2.is_finite() {
            return Err(Error::param("t2", "must be positive"));
        }
        let (n, t) = uniform_spacing(&run.sequence)?;
        if n < MIN_RECONSTRUCTION_PULSES {
            let msg = format!(
                "run `{}` has {n} pulses; its passband is broad and the sample is smeared",
                run.label
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        samples.push((1.0 / (2.0 * t), PI * PI / (8.0 * run.t2), run.label.clone()));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = samples.windows(2).find(|w| w[1].0 <= w[0].0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidTrace(format!(
            "runs `{}` and `{}` probe the same frequency",
            w[0].2, w[1].2
        )));
    }
    let mut psd = NoisePsd::new(
        samples.iter().map(|s| s.0).collect(),
        samples.iter().map(|s| s.1).collect(),
        samples.into_iter().map(|s| s.2).collect(),
    )?;
    psd.warnings = warnings;
    Ok(psd)
}

/// Time at which a coherence curve falls to `1/e`, interpolated in
/// `ln chi` against `ln t`.
pub fn t2_from_coherence(curve: &CoherenceCurve) -> Result<f64> {
    let (t, chi) = (&curve.times, &curve.chi);
    for k in 0..t.len() {
        if chi[k] >= 1.0 {
            if k == 0 || !(chi[k - 1] > 0.0) || !(t[k - 1] > 0.0) {
                return Err(Error::Infeasible(
                    "coherence is already below 1/e at the first time".into(),
                ));
            }
            let (x0, x1) = (t[k - 1].ln(), t[k].ln());
            let (y0, y1) = (chi[k - 1].ln(), chi[k].ln());
            return Ok((x0 + (x1 - x0) * (0.0 - y0) / (y1 - y0)).exp());
        }
    }
    Err(Error::Infeasible("coherence never falls to 1/e".into()))
}
