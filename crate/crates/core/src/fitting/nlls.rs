use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::DecayTrace;
use crate::{Error, Result};

/// One model parameter with its starting value and box bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub lower: f64,
    pub upper: f64,
    pub fixed: bool,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, init: f64) -> Self {
        Self {
            name: name.into(),
            init,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            fixed: false,
        }
    }

    pub fn bounds(mut self, lower: f64, upper: f64) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn fixed(mut self, fixed: bool) -> Self {
        self.fixed = fixed;
        self
    }
}

/// Stopping rules and numeric-Jacobian step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Largest relative parameter change counted as converged.
    pub step_tol: f64,
    /// Largest cosine between the gradient and any Jacobian column counted as converged.
    pub gradient_tol: f64,
    /// Relative central-difference step.
    pub jacobian_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tol: 1e-10,
            gradient_tol: 1e-12,
            jacobian_step: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// One standard deviation from the covariance at the optimum; 0 for fixed parameters.
    pub uncertainties: Vec<f64>,
    pub fixed: Vec<bool>,
    /// `sqrt(sum r^2)` of the weighted residuals at the optimum.
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.values[i])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.uncertainties[i])
    }

    /// `name = value ± sigma` per parameter followed by fit diagnostics.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.names.len() {
            let tag = if self.fixed[i] { " (fixed)" } else { "" };
            s.push_str(&format!(
                "{} = {:.9e} ± {:.3e}{}\n",
                self.names[i], self.values[i], self.uncertainties[i], tag
            ));
        }
        s.push_str(&format!("residual_norm = {:.6e}\n", self.residual_norm));
        s.push_str(&format!("iterations = {}\n", self.iterations));
        s.push_str(&format!("converged = {}\n", self.converged));
        for w in &self.warnings {
            s.push_str(&format!("warning = {w}\n"));
        }
        s
    }
}

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt scaling) fit of
/// `model(x, params)` to a trace. Steps leaving the bounds are projected back.
pub fn nlls_fit<F>(model: F, trace: &DecayTrace, params: &[ParamSpec], opts: &LmOptions) -> Result<FitResult>
where
    F: Fn(f64, &[f64]) -> f64,
{
    for p in params {
        if !(p.lower <= p.upper) {
            return Err(Error::InvalidParameter {
                name: "bounds",
                reason: format!("lower exceeds upper for `{}`", p.name),
            });
        }
        if !(p.init >= p.lower && p.init <= p.upper) || !p.init.is_finite() {
            return Err(Error::BoundViolation {
                name: p.name.clone(),
                value: p.init,
                lower: p.lower,
                upper: p.upper,
            });
        }
    }
    let free: Vec<usize> = (0..params.len()).filter(|&i| !params[i].fixed).collect();
    let k = free.len();
    let m = trace.len();
    if m <= k {
        return Err(Error::InvalidTrace(format!(
            "{m} points cannot constrain {k} free parameters"
        )));
    }
    let x = trace.abscissa();
    let y = trace.amplitude();
    let weights: Vec<f64> = match trace.sigma() {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; m],
    };
    let residuals = |p: &[f64]| -> DVector<f64> {
        DVector::from_iterator(m, (0..m).map(|i| (y[i] - model(x[i], p)) * weights[i]))
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(m, k);
        let mut q = p.to_vec();
        for (c, &j) in free.iter().enumerate() {
            let scale = [p[j].abs(), params[j].init.abs(), 1.0].into_iter().find(|v| *v > 0.0).unwrap_or(1.0);
            let h = opts.jacobian_step * scale;
            q[j] = p[j] + h;
            let fp: Vec<f64> = (0..m).map(|i| model(x[i], &q)).collect();
            q[j] = p[j] - h;
            let fm: Vec<f64> = (0..m).map(|i| model(x[i], &q)).collect();
            q[j] = p[j];
            for i in 0..m {
                jac[(i, c)] = (fp[i] - fm[i]) / (2.0 * h) * weights[i];
            }
        }
        jac
    };
    let project = |p: &mut [f64]| {
        for &j in &free {
            p[j] = p[j].clamp(params[j].lower, params[j].upper);
        }
    };

    let mut p: Vec<f64> = params.iter().map(|s| s.init).collect();
    let mut r = residuals(&p);
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::InvalidTrace("model is not finite at the initial parameters".into()));
    }
    let initial_residual_norm = cost.sqrt();
    // residuals at rounding level carry no direction information
    let floor = 1e-12 * (0..m).map(|i| (y[i] * weights[i]).powi(2)).sum::<f64>().sqrt();
    let mut lambda = 1e-3;
    let mut converged = k == 0 || cost.sqrt() <= floor;
    let mut iterations = 0;
    let mut jac = jacobian(&p);

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let g = jac.transpose() * &r;
        if stationarity(&jac, &r, &p, &free, params) < opts.gradient_tol {
            converged = true;
            break;
        }
        let a = jac.transpose() * &jac;
        let mut accepted = false;
        while !accepted {
            let delta = match bounded_step(&a, &g, lambda, &p, &free, params) {
                Some(d) => d,
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        break;
                    }
                    continue;
                }
            };
            let mut trial = p.clone();
            for (c, &j) in free.iter().enumerate() {
                trial[j] += delta[c];
            }
            project(&mut trial);
            let rel_step = free
                .iter()
                .map(|&j| (trial[j] - p[j]).abs() / p[j].abs().max(1e-300))
                .fold(0.0f64, f64::max);
            let r_trial = residuals(&trial);
            let c_trial = r_trial.norm_squared();
            if c_trial.is_finite() && c_trial <= cost {
                let improved = c_trial < cost;
                p = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_step < opts.step_tol || !improved || cost.sqrt() <= floor {
                    converged = true;
                }
            } else if rel_step < opts.step_tol {
                // no representable improvement left
                converged = true;
                break;
            } else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    break;
                }
            }
        }
        if !accepted && !converged {
            break;
        }
        if !converged {
            jac = jacobian(&p);
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations });
    }

    let jac = jacobian(&p);
    if cost.sqrt() > floor && stationarity(&jac, &r, &p, &free, params) > STATIONARITY_CHECK {
        // stalled away from a minimum
        return Err(Error::NoConvergence { iterations });
    }
    let uncertainties_free = covariance_diagonal(&jac, cost, m, &free, params)?;
    let mut uncertainties = vec![0.0; params.len()];
    for (c, &j) in free.iter().enumerate() {
        uncertainties[j] = uncertainties_free[c];
    }
    Ok(FitResult {
        names: params.iter().map(|s| s.name.clone()).collect(),
        values: p,
        uncertainties,
        fixed: params.iter().map(|s| s.fixed).collect(),
        residual_norm: cost.sqrt(),
        initial_residual_norm,
        converged,
        iterations,
        warnings: Vec::new(),
    })
}

/// Largest projected-gradient cosine accepted at a reported optimum.
const STATIONARITY_CHECK: f64 = 1e-4;

/// Largest cosine between the residual and a Jacobian column, ignoring
/// parameters held at a bound by the gradient.
/// Damped Gauss-Newton step. Parameters sitting on a bound that the step
/// would push outward are held and the step is re-solved for the rest, so
/// the others do not inherit a move that projection then discards.
fn bounded_step(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    lambda: f64,
    p: &[f64],
    free: &[usize],
    params: &[ParamSpec],
) -> Option<DVector<f64>> {
    let k = free.len();
    let mut held = vec![false; k];
    loop {
        let active: Vec<usize> = (0..k).filter(|&c| !held[c]).collect();
        let mut delta = DVector::zeros(k);
        if !active.is_empty() {
            let mut damped = a.select_rows(&active).select_columns(&active);
            for (i, &c) in active.iter().enumerate() {
                damped[(i, i)] += lambda * a[(c, c)].max(1e-300);
            }
            let rhs = g.select_rows(&active);
            let sol = damped.cholesky()?.solve(&rhs);
            for (i, &c) in active.iter().enumerate() {
                delta[c] = sol[i];
            }
        }
        let mut changed = false;
        for &c in &active {
            let j = free[c];
            let outward = (p[j] <= params[j].lower && delta[c] < 0.0) || (p[j] >= params[j].upper && delta[c] > 0.0);
            if outward {
                held[c] = true;
                changed = true;
            }
        }
        if !changed {
            return Some(delta);
        }
    }
}

fn stationarity(
    jac: &DMatrix<f64>,
    r: &DVector<f64>,
    p: &[f64],
    free: &[usize],
    params: &[ParamSpec],
) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = jac.transpose() * r;
    free.iter()
        .enumerate()
        .map(|(c, &j)| {
            let n = jac.column(c).norm();
            let pinned = (p[j] >= params[j].upper && g[c] > 0.0) || (p[j] <= params[j].lower && g[c] < 0.0);
            if n > 0.0 && !pinned {
                g[c].abs() / (n * rn)
            } else {
                0.0
            }
        })
        .fold(0.0f64, f64::max)
}

/// Reciprocal condition number of the column-normalized normal matrix below
/// which a parameter counts as unidentifiable.
const SINGULAR_RCOND: f64 = 1e-13;

fn covariance_diagonal(
    jac: &DMatrix<f64>,
    cost: f64,
    m: usize,
    free: &[usize],
    params: &[ParamSpec],
) -> Result<Vec<f64>> {
    let k = free.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let norms: Vec<f64> = (0..k).map(|c| jac.column(c).norm()).collect();
    if let Some(c) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::SingularJacobian(params[free[c]].name.clone()));
    }
    let a = jac.transpose() * jac;
    let corr = DMatrix::from_fn(k, k, |i, j| a[(i, j)] / (norms[i] * norms[j]));
    let eig = corr.clone().symmetric_eigen();
    let (imin, &emin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let emax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if emin <= SINGULAR_RCOND * emax {
        let v = eig.eigenvectors.column(imin);
        let worst = v.iamax();
        return Err(Error::SingularJacobian(params[free[worst]].name.clone()));
    }
    let inv = corr
        .try_inverse()
        .ok_or_else(|| Error::SingularJacobian(params[free[imin]].name.clone()))?;
    let s2 = cost / (m - k) as f64;
    Ok((0..k)
        .map(|c| (inv[(c, c)].max(0.0) * s2).sqrt() / norms[c])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_trace() -> DecayTrace {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = x.iter().map(|v| 3.0 * v + 1.0).collect();
        DecayTrace::new(x, y, None).unwrap()
    }

    #[test]
    fn fits_a_line_exactly() {
        let r = nlls_fit(
            |x, p| p[0] * x + p[1],
            &line_trace(),
            &[ParamSpec::new("a", 1.0), ParamSpec::new("b", 0.0)],
            &LmOptions::default(),
        )
        .unwrap();
        assert!((r.values[0] - 3.0).abs() < 1e-9);
        assert!((r.values[1] - 1.0).abs() < 1e-9);
        assert!(r.residual_norm <= r.initial_residual_norm);
    }

    #[test]
    fn fixed_parameter_stays() {
        let r = nlls_fit(
            |x, p| p[0] * x + p[1],
            &line_trace(),
            &[ParamSpec::new("a", 1.0), ParamSpec::new("b", 0.5).fixed(true)],
            &LmOptions::default(),
        )
        .unwrap();
        assert_eq!(r.values[1], 0.5);
        assert_eq!(r.uncertainties[1], 0.0);
    }

    #[test]
    fn error_paths() {
        let t = line_trace();
        let lin = |x: f64, p: &[f64]| p[0] * x + p[1];
        assert!(matches!(
            nlls_fit(lin, &t, &[ParamSpec::new("a", 5.0).bounds(0.0, 1.0), ParamSpec::new("b", 0.0)], &LmOptions::default()),
            Err(Error::BoundViolation { .. })
        ));
        // b and c enter only as their sum
        assert!(matches!(
            nlls_fit(
                |x, p| p[0] * x + p[1] + p[2],
                &t,
                &[ParamSpec::new("a", 1.0), ParamSpec::new("b", 0.0), ParamSpec::new("c", 0.3)],
                &LmOptions::default()
            ),
            Err(Error::SingularJacobian(_))
        ));
        let opts = LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        };
        assert!(matches!(
            nlls_fit(|x, p| (p[0] * x).exp(), &t, &[ParamSpec::new("k", 2.0)], &opts),
            Err(Error::NoConvergence { .. })
        ));
    }
}
