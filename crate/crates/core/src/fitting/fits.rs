use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::nlls::{nlls_fit, FitResult, LmOptions, ParamSpec};
use super::DecayTrace;
use crate::decoherence::{
    effective_linewidth_raw, gamma_sd_raw, stretched_exponential, t1_rate_raw, T1Params,
};
use crate::{Error, Result};

/// Stretch factor range accepted for echo decays.
pub const STRETCH_BOUNDS: (f64, f64) = (0.5, 4.0);
/// Stretch factor used when the log-log estimate is unavailable.
pub const DEFAULT_STRETCH: f64 = 1.5;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HahnOptions {
    /// Holds the stretch factor at this value.
    pub fixed_n: Option<f64>,
}

fn min_points(trace: &DecayTrace) -> Result<()> {
    trace.require_points(4)
}

/// Abscissa where `y` first falls (or rises) through `level`, by linear interpolation.
fn crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    for k in 1..x.len() {
        let (a, b) = (y[k - 1] - level, y[k] - level);
        if a == 0.0 {
            return Some(x[k - 1]);
        }
        if a * b < 0.0 || b == 0.0 {
            return Some(x[k - 1] + (x[k] - x[k - 1]) * a / (a - b));
        }
    }
    None
}

/// `A exp(-(t/T2)^n)` with `t = 2 tau`. Parameters `a`, `t2`, `n`.
pub fn fit_hahn_decay(trace: &DecayTrace, opts: &HahnOptions) -> Result<FitResult> {
    min_points(trace)?;
    let t = trace.abscissa();
    let y = trace.amplitude();
    let a0 = y.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if a0 == 0.0 {
        return Err(Error::InvalidTrace("all amplitudes are zero".into()));
    }
    let (mut t2_0, mut n0) = (None, opts.fixed_n.unwrap_or(DEFAULT_STRETCH));
    // ln(-ln(y/A)) = n ln t - n ln T2
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(ti, yi)| **ti > 0.0 && (0.05..0.95).contains(&(**yi / a0)))
        .map(|(ti, yi)| (ti.ln(), (-(yi / a0).ln()).ln()))
        .collect();
    if pts.len() >= 2 && opts.fixed_n.is_none() {
        let (slope, icpt) = linear_regression(&pts);
        if slope >= STRETCH_BOUNDS.0 && slope <= STRETCH_BOUNDS.1 {
            n0 = slope;
            t2_0 = Some((-icpt / slope).exp());
        }
    }
    let t2_0 = t2_0
        .or_else(|| {
            let scaled: Vec<f64> = y.iter().map(|v| v / a0).collect();
            crossing(t, &scaled, (-1f64).exp())
        })
        .unwrap_or(t[t.len() - 1]);
    let a_bounds = if a0 > 0.0 {
        (0.0, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, 0.0)
    };
    let params = [
        ParamSpec::new("a", a0).bounds(a_bounds.0, a_bounds.1),
        ParamSpec::new("t2", t2_0.max(f64::MIN_POSITIVE)).bounds(f64::MIN_POSITIVE, f64::INFINITY),
        ParamSpec::new("n", n0)
            .bounds(STRETCH_BOUNDS.0.min(n0), STRETCH_BOUNDS.1.max(n0))
            .fixed(opts.fixed_n.is_some()),
    ];
    nlls_fit(
        |x, p| stretched_exponential(x, p[0], p[1], p[2]),
        trace,
        &params,
        &LmOptions::default(),
    )
}

fn linear_regression(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `A (1 - exp(-t/T1))`. Parameters `a`, `t1`.
pub fn fit_saturation_recovery(trace: &DecayTrace) -> Result<FitResult> {
    min_points(trace)?;
    let t = trace.abscissa();
    let y = trace.amplitude();
    let a0 = y.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if a0 == 0.0 {
        return Err(Error::InvalidTrace("all amplitudes are zero".into()));
    }
    let scaled: Vec<f64> = y.iter().map(|v| v / a0).collect();
    let t1_0 = crossing(t, &scaled, 1.0 - (-1f64).exp()).unwrap_or(t[t.len() - 1]);
    let params = [
        ParamSpec::new("a", a0),
        ParamSpec::new("t1", t1_0.max(f64::MIN_POSITIVE)).bounds(f64::MIN_POSITIVE, f64::INFINITY),
    ];
    nlls_fit(
        |x, p| p[0] * (-(-x / p[1]).exp_m1()),
        trace,
        &params,
        &LmOptions::default(),
    )
}

/// Fits the spin-lattice rate model to `(temperature K, T1 s)` points at a
/// known transition frequency. The fit runs on `1/T1` with relative weights.
/// Parameters `r0`, `r_ff`, `r_d` (Hz), all non-negative.
pub fn fit_t1_temperature(points: &DecayTrace, frequency: f64) -> Result<FitResult> {
    min_points(points)?;
    if !(frequency > 0.0) {
        return Err(Error::param("frequency", "must be positive"));
    }
    if points.abscissa()[0] <= 0.0 || points.amplitude().iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidTrace("temperatures and T1 values must be positive".into()));
    }
    let temps = points.abscissa().to_vec();
    let rates: Vec<f64> = points.amplitude().iter().map(|t1| 1.0 / t1).collect();
    let sigma: Vec<f64> = match points.sigma() {
        Some(s) => s
            .iter()
            .zip(points.amplitude())
            .map(|(s, t1)| s / (t1 * t1))
            .collect(),
        None => rates.clone(),
    };
    let data = DecayTrace::new(temps.clone(), rates.clone(), Some(sigma.clone()))?;

    // weighted linear least squares for the start
    let basis = |t: f64| {
        let x = frequency / (2.0 * crate::constants::K_B_OVER_H * t);
        [1.0, crate::decoherence::sech2(x), 1.0 / x.tanh()]
    };
    let m = temps.len();
    let a = DMatrix::from_fn(m, 3, |i, j| basis(temps[i])[j] / sigma[i]);
    let b = DVector::from_iterator(m, (0..m).map(|i| rates[i] / sigma[i]));
    let init = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidTrace(e.to_string()))?;
    let params: Vec<ParamSpec> = ["r0", "r_ff", "r_d"]
        .iter()
        .zip(init.iter())
        .map(|(n, v)| ParamSpec::new(*n, v.max(0.0)).bounds(0.0, f64::INFINITY))
        .collect();
    nlls_fit(
        |t, p| t1_rate_raw(t, p[0], p[1], p[2], frequency),
        &data,
        &params,
        &LmOptions::default(),
    )
}

/// Fits the bath parameters `gamma_max` (Hz) and `g_env` to `(temperature K,
/// T2 s)` points. The coherence rate is spectral diffusion with the bath
/// flip rate taken as `1/T1(T)`, plus the instantaneous diffusion rate
/// `id_rate` (Hz) and `1/(2 T1)`. The fit runs on `ln T2`.
pub fn fit_t2_temperature(
    points: &DecayTrace,
    t1: &T1Params,
    id_rate: f64,
    field: f64,
) -> Result<FitResult> {
    min_points(points)?;
    t1.validate()?;
    if !(id_rate >= 0.0) {
        return Err(Error::param("id_rate", "must be non-negative"));
    }
    if points.abscissa()[0] <= 0.0 || points.amplitude().iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidTrace("temperatures and T2 values must be positive".into()));
    }
    let temps = points.abscissa().to_vec();
    let log_t2: Vec<f64> = points.amplitude().iter().map(|v| v.ln()).collect();
    let sigma = points
        .sigma()
        .map(|s| s.iter().zip(points.amplitude()).map(|(s, v)| s / v).collect());
    let data = DecayTrace::new(temps.clone(), log_t2.clone(), sigma)?;
    let flip = |t: f64| t1_rate_raw(t, t1.r0, t1.r_ff, t1.r_d, t1.frequency);
    let model = move |t: f64, p: &[f64]| {
        let r = flip(t);
        let sd = (PI * gamma_sd_raw(t, field, p[0], p[1]) * r).sqrt() / 2.0;
        -(sd + id_rate + 0.5 * r).ln()
    };

    // scan g_env, taking the median gamma_max implied by each point
    let mut best = (f64::INFINITY, 1e6, 1.0);
    for k in 0..=60 {
        let g_env = 0.02 * 1000f64.powf(k as f64 / 60.0);
        let mut implied: Vec<f64> = temps
            .iter()
            .zip(&log_t2)
            .filter_map(|(&t, &lt)| {
                let r = flip(t);
                let excess = (-lt).exp() - id_rate - 0.5 * r;
                let s = gamma_sd_raw(t, field, 1.0, g_env);
                (excess > 0.0 && s > 0.0).then(|| (2.0 * excess).powi(2) / (PI * r * s))
            })
            .collect();
        if implied.is_empty() {
            continue;
        }
        implied.sort_by(f64::total_cmp);
        let gm = implied[implied.len() / 2];
        if !gm.is_finite() {
            continue;
        }
        let cost: f64 = temps
            .iter()
            .zip(&log_t2)
            .map(|(&t, &lt)| (lt - model(t, &[gm, g_env])).powi(2))
            .sum();
        if cost < best.0 {
            best = (cost, gm, g_env);
        }
    }
    let params = [
        ParamSpec::new("gamma_max", best.1).bounds(0.0, f64::INFINITY),
        ParamSpec::new("g_env", best.2).bounds(0.0, 50.0),
    ];
    nlls_fit(model, &data, &params, &LmOptions::default())
}

/// Fits the three-pulse effective linewidth to `(T_w s, Gamma_eff Hz)`
/// points. Parameters `gamma_0`, `gamma_sd`, `rate` (Hz). Warns when the
/// waiting times do not reach from `0.3/R` to `3/R`.
pub fn fit_spectral_diffusion(points: &DecayTrace) -> Result<FitResult> {
    min_points(points)?;
    let tw = points.abscissa();
    let g = points.amplitude();
    let g0 = g[0].max(0.0);
    let plateau = g[g.len() - 1];
    let sd0 = (2.0 * (plateau - g0)).max(0.0);
    let half = g0 + 0.25 * sd0;
    let rate0 = crossing(tw, g, half)
        .filter(|t| *t > 0.0)
        .map(|t| (2f64).ln() / t)
        .unwrap_or(1.0 / tw[tw.len() - 1].max(f64::MIN_POSITIVE));
    let params = [
        ParamSpec::new("gamma_0", g0).bounds(0.0, f64::INFINITY),
        ParamSpec::new("gamma_sd", sd0).bounds(0.0, f64::INFINITY),
        ParamSpec::new("rate", rate0).bounds(0.0, f64::INFINITY),
    ];
    let mut fit = nlls_fit(
        |t, p| effective_linewidth_raw(t, p[0], p[1], p[2]),
        points,
        &params,
        &LmOptions::default(),
    )?;
    let r = fit.values[2];
    if r > 0.0 && (tw[0] > 0.3 / r || tw[tw.len() - 1] < 3.0 / r) {
        let msg = format!(
            "waiting times [{:.3e}, {:.3e}] s do not span a decade around 1/R = {:.3e} s; R is poorly resolved",
            tw[0],
            tw[tw.len() - 1],
            1.0 / r
        );
        log::warn!("{msg}");
        fit.warnings.push(msg);
    }
    Ok(fit)
}
