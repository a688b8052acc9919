//! Bounded Levenberg-Marquardt fitting, the relaxation fits built on it and
//! noise spectrum reconstruction from CPMG coherence times.

mod fits;
mod nlls;
mod psd;

use std::io::{Read, Write};

use crate::{Error, Result};

pub use fits::{
    fit_hahn_decay, fit_saturation_recovery, fit_spectral_diffusion, fit_t1_temperature,
    fit_t2_temperature, HahnOptions,
};
pub use nlls::{nlls_fit, FitResult, LmOptions, ParamSpec};
pub use psd::{reconstruct_psd, t2_from_coherence, CpmgRun, NoisePsd};

/// Sampled decay or parameter curve: abscissa in s (or K for temperature
/// series), amplitude in the natural unit of the quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayTrace {
    abscissa: Vec<f64>,
    amplitude: Vec<f64>,
    sigma: Option<Vec<f64>>,
}

impl DecayTrace {
    pub fn new(abscissa: Vec<f64>, amplitude: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if abscissa.len() != amplitude.len() {
            return Err(Error::InvalidTrace(format!(
                "{} abscissa values but {} amplitudes",
                abscissa.len(),
                amplitude.len()
            )));
        }
        if abscissa.iter().chain(&amplitude).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrace("non-finite value".into()));
        }
        if abscissa.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTrace("abscissa must strictly increase".into()));
        }
        if let Some(s) = &sigma {
            if s.len() != abscissa.len() {
                return Err(Error::InvalidTrace("sigma length differs from data".into()));
            }
            if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidTrace("sigma must be positive".into()));
            }
        }
        Ok(Self {
            abscissa,
            amplitude,
            sigma,
        })
    }

    pub fn abscissa(&self) -> &[f64] {
        &self.abscissa
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }

    pub fn len(&self) -> usize {
        self.abscissa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissa.is_empty()
    }

    /// Reads `t_seconds,amplitude[,sigma]` with a header row.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let with_sigma = match names.as_slice() {
            ["t_seconds", "amplitude"] => false,
            ["t_seconds", "amplitude", "sigma"] => true,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    reason: format!(
                        "expected header `t_seconds,amplitude[,sigma]`, found `{}`",
                        names.join(",")
                    ),
                })
            }
        };
        let (mut t, mut a, mut s) = (Vec::new(), Vec::new(), Vec::new());
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
            t.push(num(0)?);
            a.push(num(1)?);
            if with_sigma {
                s.push(num(2)?);
            }
        }
        Self::new(t, a, with_sigma.then_some(s))
    }

    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match &self.sigma {
            Some(_) => w.write_record(["t_seconds", "amplitude", "sigma"])?,
            None => w.write_record(["t_seconds", "amplitude"])?,
        }
        for i in 0..self.len() {
            let mut row = vec![
                format!("{:.12e}", self.abscissa[i]),
                format!("{:.12e}", self.amplitude[i]),
            ];
            if let Some(s) = &self.sigma {
                row.push(format!("{:.12e}", s[i]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub(crate) fn require_points(&self, n: usize) -> Result<()> {
        if self.len() < n {
            Err(Error::InvalidTrace(format!(
                "need at least {n} points, got {}",
                self.len()
            )))
        } else {
            Ok(())
        }
    }
}
