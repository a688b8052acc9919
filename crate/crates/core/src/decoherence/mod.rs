//! Closed-form relaxation and spectral-diffusion models and a Monte Carlo
//! bath simulator.

mod models;
mod monte_carlo;

pub use models::{
    effective_linewidth, excited_density_for_t2, field_noise_bound, gamma_sd,
    instantaneous_diffusion_rate, stretched_exponential, t1_rate, t2_sd, t2_total,
    ExcitationBookkeeping, IdRate, SdParams, T1Params,
};
pub(crate) use models::{effective_linewidth_raw, gamma_sd_raw, sech2, t1_rate_raw};
pub use monte_carlo::{
    sudden_jump_monte_carlo, BathSpec, MonteCarloDecay, DEFAULT_BATH_SPINS, MIN_TRIALS,
};
