use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{BOHR_MAGNETON, HBAR, K_B_OVER_H, MU_0, MU_B_OVER_H};
use crate::{Error, Result};

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::param(name, "must be positive"))
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be non-negative and finite"))
    }
}

/// `sech^2(x)`, safe for large `|x|`.
pub(crate) fn sech2(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

pub(crate) fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

/// Spin-lattice relaxation: direct phonon process plus flip-flops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct T1Params {
    /// Temperature-independent rate, Hz.
    pub r0: f64,
    /// Flip-flop rate, Hz.
    pub r_ff: f64,
    /// Direct-process rate, Hz.
    pub r_d: f64,
    /// Transition frequency, Hz.
    pub frequency: f64,
}

impl T1Params {
    pub fn new(r0: f64, r_ff: f64, r_d: f64, frequency: f64) -> Result<Self> {
        let p = Self {
            r0,
            r_ff,
            r_d,
            frequency,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("r0", self.r0)?;
        non_negative("r_ff", self.r_ff)?;
        non_negative("r_d", self.r_d)?;
        positive("frequency", self.frequency)
    }
}

/// `1/T1 = R0 + R_ff sech^2(hf/2kT) + R_D coth(hf/2kT)`, Hz.
pub fn t1_rate(temperature: f64, p: &T1Params) -> Result<f64> {
    positive("temperature", temperature)?;
    p.validate()?;
    Ok(t1_rate_raw(temperature, p.r0, p.r_ff, p.r_d, p.frequency))
}

pub(crate) fn t1_rate_raw(t: f64, r0: f64, r_ff: f64, r_d: f64, f: f64) -> f64 {
    let x = f / (2.0 * K_B_OVER_H * t);
    r0 + r_ff * sech2(x) + r_d * coth(x)
}

/// Spectral diffusion parameters of the spin bath.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdParams {
    /// Full dipolar broadening of an unpolarized bath, Hz.
    pub gamma_max: f64,
    /// g-factor of the bath spins.
    pub g_env: f64,
    /// Lorentzian FWHM of the diffusion, Hz.
    pub gamma_sd: f64,
    /// Bath flip rate, Hz.
    pub rate: f64,
    /// Linewidth without spectral diffusion, Hz.
    pub gamma_0: f64,
}

impl SdParams {
    pub fn validate(&self) -> Result<()> {
        non_negative("gamma_max", self.gamma_max)?;
        non_negative("g_env", self.g_env)?;
        non_negative("gamma_sd", self.gamma_sd)?;
        non_negative("rate", self.rate)?;
        non_negative("gamma_0", self.gamma_0)
    }
}

/// `Gamma_max sech^2(g_env muB B / 2kT)`, Hz.
pub fn gamma_sd(temperature: f64, field: f64, gamma_max: f64, g_env: f64) -> Result<f64> {
    positive("temperature", temperature)?;
    non_negative("gamma_max", gamma_max)?;
    Ok(gamma_sd_raw(temperature, field, gamma_max, g_env))
}

pub(crate) fn gamma_sd_raw(t: f64, b: f64, gamma_max: f64, g_env: f64) -> f64 {
    gamma_max * sech2(g_env * MU_B_OVER_H * b / (2.0 * K_B_OVER_H * t))
}

/// Spectral-diffusion limited coherence time `2 / sqrt(pi Gamma_SD R)`, s.
pub fn t2_sd(gamma_sd: f64, rate: f64) -> Result<f64> {
    positive("gamma_sd", gamma_sd)?;
    positive("rate", rate)?;
    Ok(2.0 / (PI * gamma_sd * rate).sqrt())
}

/// `1/T2 = 1/T2_SD + 1/T2_ID + 1/(2 T1)`; pass `f64::INFINITY` for an absent channel.
pub fn t2_total(t2_sd: f64, t2_id: f64, t1: f64) -> Result<f64> {
    positive("t2_sd", t2_sd)?;
    positive("t2_id", t2_id)?;
    positive("t1", t1)?;
    Ok(1.0 / (1.0 / t2_sd + 1.0 / t2_id + 1.0 / (2.0 * t1)))
}

/// Three-pulse effective linewidth `Gamma_0 + Gamma_SD (1 - e^{-R T_w}) / 2`, Hz.
pub fn effective_linewidth(t_w: f64, gamma_0: f64, gamma_sd: f64, rate: f64) -> Result<f64> {
    non_negative("t_w", t_w)?;
    non_negative("gamma_0", gamma_0)?;
    non_negative("gamma_sd", gamma_sd)?;
    non_negative("rate", rate)?;
    Ok(effective_linewidth_raw(t_w, gamma_0, gamma_sd, rate))
}

pub(crate) fn effective_linewidth_raw(t_w: f64, gamma_0: f64, gamma_sd: f64, rate: f64) -> f64 {
    gamma_0 + 0.5 * gamma_sd * (-(-rate * t_w).exp_m1())
}

/// `A exp(-(t/T2)^n)`; `t = 2 tau` for two-pulse echoes.
pub fn stretched_exponential(t: f64, a: f64, t2: f64, n: f64) -> f64 {
    a * (-(t / t2).powf(n)).exp()
}

/// Instantaneous diffusion rate and its g-factor scaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdRate {
    /// `1/T2_ID`, Hz.
    pub rate: f64,
    /// `g_eff^2`, the factor by which the rate scales with the transition.
    pub g_squared: f64,
}

fn id_prefactor(g_eff: f64) -> f64 {
    PI / (9.0 * 3f64.sqrt()) * MU_0 * (g_eff * BOHR_MAGNETON).powi(2) / HBAR
}

/// `1/T2_ID = pi/(9 sqrt 3) mu0 (g_eff muB)^2 n_exc / hbar` for an excited
/// spin density `n_exc` in m^-3.
pub fn instantaneous_diffusion_rate(n_exc: f64, g_eff: f64) -> Result<IdRate> {
    non_negative("n_exc", n_exc)?;
    if !g_eff.is_finite() {
        return Err(Error::param("g_eff", "must be finite"));
    }
    Ok(IdRate {
        rate: id_prefactor(g_eff) * n_exc,
        g_squared: g_eff * g_eff,
    })
}

/// Excited density that yields `T2_ID = t2_id` for the given transition.
pub fn excited_density_for_t2(t2_id: f64, g_eff: f64) -> Result<f64> {
    positive("t2_id", t2_id)?;
    positive("g_eff", g_eff.abs())?;
    Ok(1.0 / (t2_id * id_prefactor(g_eff)))
}

/// Multiplicative factors that turn an ion density into the density of
/// spins flipped by the pulses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationBookkeeping {
    /// m^-3.
    pub ion_density: f64,
    pub isotope_purity: f64,
    pub site_fraction: f64,
    /// Share of ions in the addressed hyperfine level.
    pub hyperfine_occupancy: f64,
    /// Share of the inhomogeneous line inside the pulse bandwidth.
    pub spectral_fraction: f64,
}

impl ExcitationBookkeeping {
    pub fn excited_density(&self) -> Result<f64> {
        non_negative("ion_density", self.ion_density)?;
        for (name, v) in [
            ("isotope_purity", self.isotope_purity),
            ("site_fraction", self.site_fraction),
            ("hyperfine_occupancy", self.hyperfine_occupancy),
            ("spectral_fraction", self.spectral_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, "must lie in [0, 1]"));
            }
        }
        Ok(self.ion_density
            * self.isotope_purity
            * self.site_fraction
            * self.hyperfine_occupancy
            * self.spectral_fraction)
    }
}

/// Magnetic noise amplitude compatible with a coherence time,
/// `1/(pi g muB T2 / h)`, T.
pub fn field_noise_bound(t2: f64, g: f64) -> Result<f64> {
    positive("t2", t2)?;
    positive("g", g.abs())?;
    Ok(1.0 / (PI * g.abs() * MU_B_OVER_H * t2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hyperbolic_factors() {
        assert!((sech2(1.0) - 0.4200).abs() < 1e-4);
        assert!((coth(1.0) - 1.3130).abs() < 1e-4);
        assert_eq!(sech2(1e6), 0.0);
    }

    #[test]
    fn t1_plateau_and_growth() {
        let p = T1Params::new(1.67e-8, 0.87, 2.19, 5.67e9).unwrap();
        let low = t1_rate(1e-3, &p).unwrap();
        assert_relative_eq!(low, 2.19 + 1.67e-8, max_relative = 1e-9);
        assert!((1.0 / low - 0.4566).abs() < 1e-3);
        let hot = t1_rate(100.0, &p).unwrap();
        let x = 5.67e9 / (2.0 * K_B_OVER_H * 100.0);
        assert_relative_eq!(hot, 2.19 / x + 0.87, max_relative = 1e-3);
        assert!(t1_rate(0.0, &p).is_err());
    }

    #[test]
    fn gamma_sd_reference() {
        let g = gamma_sd(0.026, 0.259, 2.80e6, 0.70).unwrap();
        assert!((g - 101.6e3).abs() < 1.0e3, "{g}");
        assert_eq!(gamma_sd(1.0, 0.0, 2.8e6, 0.7).unwrap(), 2.8e6);
        assert_eq!(
            gamma_sd(0.05, -0.3, 2.8e6, 0.7).unwrap(),
            gamma_sd(0.05, 0.3, 2.8e6, 0.7).unwrap()
        );
    }

    #[test]
    fn t2_sd_values() {
        assert!((t2_sd(64.5e3, 5.6).unwrap() - 1.87e-3).abs() < 0.01e-3);
        assert!((t2_sd(124e3, 1.4).unwrap() - 2.70e-3).abs() < 0.01e-3);
        assert_relative_eq!(t2_sd(1e5, 4.0).unwrap(), 0.5 * t2_sd(1e5, 1.0).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn t2_total_values() {
        assert_eq!(t2_total(2e-3, f64::INFINITY, f64::INFINITY).unwrap(), 2e-3);
        assert!((t2_total(2e-3, 7e-3, 0.365).unwrap() - 1.55e-3).abs() < 0.005e-3);
    }

    #[test]
    fn linewidth_limits() {
        assert_eq!(effective_linewidth(0.0, 600.0, 64.5e3, 5.6).unwrap(), 600.0);
        assert_relative_eq!(effective_linewidth(1e3, 600.0, 64.5e3, 5.6).unwrap(), 32.85e3, max_relative = 1e-9);
        let at = effective_linewidth(1.0 / 5.6, 600.0, 64.5e3, 5.6).unwrap();
        assert_relative_eq!(at, 600.0 + 0.5 * 64.5e3 * (1.0 - (-1f64).exp()), max_relative = 1e-12);
    }

    #[test]
    fn stretched_exp_points() {
        assert_eq!(stretched_exponential(0.0, 2.0, 1e-3, 1.7), 2.0);
        assert_relative_eq!(stretched_exponential(1e-3, 2.0, 1e-3, 3.1), 2.0 / std::f64::consts::E, max_relative = 1e-12);
        assert_relative_eq!(stretched_exponential(0.5e-3, 1.0, 1e-3, 2.0), (-0.25f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn id_rate_scaling_and_inversion() {
        assert_eq!(instantaneous_diffusion_rate(0.0, 1.64).unwrap().rate, 0.0);
        let a = instantaneous_diffusion_rate(1e22, 1.0).unwrap();
        let b = instantaneous_diffusion_rate(1e22, 2.0).unwrap();
        assert_relative_eq!(b.rate, 4.0 * a.rate, max_relative = 1e-12);
        let n = excited_density_for_t2(7e-3, 1.64).unwrap();
        let r = instantaneous_diffusion_rate(n, 1.64).unwrap();
        assert_relative_eq!(1.0 / r.rate, 7e-3, max_relative = 1e-12);
    }

    #[test]
    fn noise_bound_values() {
        let b = field_noise_bound(1.46e-3, 1.64).unwrap();
        assert!(b > 9.0e-9 && b < 10.0e-9);
        assert!((field_noise_bound(1e-3, 2.0).unwrap() - 11.37e-9).abs() < 0.01e-9);
        assert_relative_eq!(field_noise_bound(0.5e-3, 2.0).unwrap(), 2.0 * field_noise_bound(1e-3, 2.0).unwrap(), max_relative = 1e-12);
    }
}
