//! Run configuration read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use kramers_core::powder::Site;
use kramers_core::{SpinSystem, T1Params, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spin: SpinBlock,
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub relaxation: RelaxationBlock,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub paths: PathsBlock,
}

/// Principal values with ZYZ Euler angles (rad).
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub principal: [f64; 3],
    #[serde(default)]
    pub euler: [f64; 3],
}

impl TensorSpec {
    fn tensor(&self) -> Tensor {
        Tensor::diagonal(self.principal).with_euler(self.euler)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    pub label: String,
    /// Share of ions on this crystal site.
    pub fraction: f64,
    pub g: TensorSpec,
    /// Hyperfine tensor, Hz.
    pub a: Option<TensorSpec>,
    /// Quadrupole tensor, Hz.
    pub q: Option<TensorSpec>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpinBlock {
    #[serde(default = "half")]
    pub electron_spin: f64,
    #[serde(default)]
    pub nuclear_spin: f64,
    #[serde(default)]
    pub g_n: f64,
    /// Abundance of the magnetic isotope; the remainder has no nuclear spin.
    #[serde(default = "one")]
    pub isotope_abundance: f64,
    pub sites: Vec<SiteSpec>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    /// Hz.
    pub f_probe: f64,
    /// Sweep range, T.
    #[serde(default)]
    pub b_min: f64,
    pub b_max: f64,
    /// Static field direction in the frame of the first site.
    #[serde(default = "z_axis")]
    pub direction: [f64; 3],
    /// Working-point field, T.
    pub field: f64,
    /// K.
    pub temperature: f64,
    /// pi/2 pulse length, s.
    pub pulse_length: f64,
    /// s.
    #[serde(default = "min_sep")]
    pub min_separation: f64,
    /// Microwave field amplitude, T.
    #[serde(default = "b1")]
    pub b1: f64,
}

/// Relaxation and bath parameters used by the decay commands.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RelaxationBlock {
    /// Hz.
    pub r0: f64,
    pub r_ff: f64,
    pub r_d: f64,
    /// Hz.
    pub gamma_max: f64,
    pub g_env: f64,
    /// Spectral-diffusion linewidth and bath flip rate for the Monte Carlo, Hz.
    pub gamma_sd: f64,
    pub rate: f64,
    /// Instantaneous-diffusion dephasing rate, Hz.
    pub id_rate: f64,
}

impl Default for RelaxationBlock {
    fn default() -> Self {
        Self {
            r0: 0.0,
            r_ff: 0.87,
            r_d: 2.19,
            gamma_max: 2.80e6,
            g_env: 0.70,
            gamma_sd: 64.5e3,
            rate: 5.6,
            id_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub orientations: usize,
    pub trials: usize,
    pub bath_spins: usize,
    /// Required by stochastic commands unless `--seed` is given.
    pub seed: Option<u64>,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            orientations: 2000,
            trials: 10_000,
            bath_spins: kramers_core::decoherence::DEFAULT_BATH_SPINS,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PathsBlock {
    /// Output directory when `--out` is not given.
    pub out: Option<PathBuf>,
}

fn half() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}
fn min_sep() -> f64 {
    kramers_core::sequence::DEFAULT_MIN_SEPARATION
}
fn b1() -> f64 {
    1e-4
}

/// Parsed configuration together with the raw bytes it came from.
pub struct Loaded {
    pub config: RunConfig,
    pub raw: Vec<u8>,
}

pub fn load_config(path: &Path) -> Result<Loaded, CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(raw.clone())
        .map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start].matches('\n').count() + 1)
            .unwrap_or(0);
        CliError::Config(format!("{}:{line}: {}", path.display(), e.message()))
    })?;
    config.validate()?;
    Ok(Loaded { config, raw })
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{name}` must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let e = &self.experiment;
        positive("experiment.f_probe", e.f_probe)?;
        positive("experiment.b_max", e.b_max)?;
        positive("experiment.field", e.field)?;
        positive("experiment.temperature", e.temperature)?;
        positive("experiment.pulse_length", e.pulse_length)?;
        positive("experiment.min_separation", e.min_separation)?;
        positive("experiment.b1", e.b1)?;
        if !(e.b_min >= 0.0 && e.b_min < e.b_max) {
            return Err(CliError::Config("`experiment.b_min` must lie in [0, b_max)".into()));
        }
        if e.direction.iter().all(|v| *v == 0.0) {
            return Err(CliError::Config("`experiment.direction` must be nonzero".into()));
        }
        let s = &self.spin;
        if s.sites.is_empty() {
            return Err(CliError::Config("`spin.sites` needs at least one site".into()));
        }
        if !(0.0..=1.0).contains(&s.isotope_abundance) {
            return Err(CliError::Config("`spin.isotope_abundance` must lie in [0, 1]".into()));
        }
        for site in &s.sites {
            positive(&format!("spin.sites.{}.fraction", site.label), site.fraction)?;
        }
        let r = &self.relaxation;
        for (name, v) in [
            ("relaxation.r0", r.r0),
            ("relaxation.r_ff", r.r_ff),
            ("relaxation.r_d", r.r_d),
            ("relaxation.gamma_max", r.gamma_max),
            ("relaxation.g_env", r.g_env),
            ("relaxation.id_rate", r.id_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("`{name}` must be non-negative, got {v}")));
            }
        }
        positive("relaxation.gamma_sd", r.gamma_sd)?;
        positive("relaxation.rate", r.rate)?;
        if self.simulation.orientations == 0 {
            return Err(CliError::Config("`simulation.orientations` must be positive".into()));
        }
        self.sites()?;
        Ok(())
    }

    /// Spin system of one crystal site carrying the magnetic isotope.
    pub fn system(&self, site: &SiteSpec) -> Result<SpinSystem, CliError> {
        let zero = || Tensor::zero();
        Ok(SpinSystem::new(
            self.spin.electron_spin,
            self.spin.nuclear_spin,
            site.g.tensor(),
            site.a.as_ref().map(TensorSpec::tensor).unwrap_or_else(zero),
            site.q.as_ref().map(TensorSpec::tensor).unwrap_or_else(zero),
            self.spin.g_n,
        )?)
    }

    /// Powder species: each site split into its magnetic-isotope part and
    /// the nuclear-spin-free remainder.
    pub fn sites(&self) -> Result<Vec<Site>, CliError> {
        let ab = self.spin.isotope_abundance;
        let mut out = Vec::new();
        for s in &self.spin.sites {
            if ab > 0.0 {
                out.push(Site {
                    label: format!("{}-hf", s.label),
                    fraction: s.fraction * ab,
                    system: self.system(s)?,
                });
            }
            if ab < 1.0 {
                out.push(Site {
                    label: format!("{}-even", s.label),
                    fraction: s.fraction * (1.0 - ab),
                    system: SpinSystem::zeeman_only(s.g.tensor()),
                });
            }
        }
        Ok(out)
    }

    pub fn t1_params(&self) -> Result<T1Params, CliError> {
        let r = &self.relaxation;
        Ok(T1Params::new(r.r0, r.r_ff, r.r_d, self.experiment.f_probe)?)
    }
}
