//! Levenberg-Marquardt least squares with a forward-difference Jacobian.
//!
//! The damped normal equations `(J'J + lambda diag(J'J)) dx = -J'r` are solved
//! by Cholesky. A step is accepted only when it lowers `|r|^2`, so the
//! recorded objective trace is non-increasing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub initial_damping: f64,
    /// Stop when the infinity norm of `J'r` falls below this.
    pub gradient_tol: f64,
    /// Stop when the step is below this relative to `|x|`.
    pub step_tol: f64,
    pub max_iterations: usize,
    pub jacobian_rel_step: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            max_iterations: 200,
            jacobian_rel_step: 1e-6,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("initial_damping", self.initial_damping),
            ("gradient_tol", self.gradient_tol),
            ("step_tol", self.step_tol),
            ("jacobian_rel_step", self.jacobian_rel_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return domain(format!("{name} must be positive, got {v}"));
            }
        }
        if self.max_iterations == 0 {
            return domain("max_iterations must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    /// Damping grew without finding a decrease: the objective is flat at working precision.
    NoFurtherDecrease,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }
}

const MAX_DAMPING: f64 = 1e16;

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn jacobian<F>(f: &F, x: &[f64], r: &[f64], rel: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut jac = DMatrix::zeros(r.len(), x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let mut h = rel * x[k].abs().max(1.0);
        xp[k] = x[k] + h;
        // fall back to a backward difference when the forward point is infeasible
        let rp = match f(&xp) {
            Ok(rp) => rp,
            Err(_) => {
                h = -h;
                xp[k] = x[k] + h;
                f(&xp)?
            }
        };
        xp[k] = x[k];
        for (i, (a, b)) in rp.iter().zip(r).enumerate() {
            jac[(i, k)] = (a - b) / h;
        }
    }
    Ok(jac)
}

/// Minimises `|f(x)|^2` starting from `x0`.
///
/// Residual evaluation errors at trial points are treated as rejected steps;
/// an error at the starting point is returned.
pub fn levenberg_marquardt<F>(f: F, x0: &[f64], config: &LmConfig) -> Result<LmReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    config.validate()?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    if r.iter().any(|v| !v.is_finite()) {
        return domain("residuals not finite at the starting point");
    }
    let mut obj = sum_sq(&r);
    let mut trace = vec![obj];
    let mut lambda = config.initial_damping;
    let mut iterations = 0;
    let termination = loop {
        if iterations >= config.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;
        let jac = jacobian(&f, &x, &r, config.jacobian_rel_step)?;
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;
        if g.amax() <= config.gradient_tol {
            break Termination::Gradient;
        }
        let jtj = jac.transpose() * &jac;
        let diag_floor = 1e-12 * jtj.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut accepted = None;
        while lambda <= MAX_DAMPING {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let dx = chol.solve(&(-&g));
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dx.norm() <= config.step_tol * (x_norm + config.step_tol) {
                accepted = Some(None);
                break;
            }
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + b).collect();
            match f(&trial) {
                Ok(rt) if rt.iter().all(|v| v.is_finite()) && sum_sq(&rt) < obj => {
                    accepted = Some(Some((trial, rt)));
                    lambda = (lambda / 10.0).max(1e-15);
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        match accepted {
            Some(Some((xt, rt))) => {
                x = xt;
                r = rt;
                obj = sum_sq(&r);
                trace.push(obj);
            }
            Some(None) => break Termination::Step,
            None => break Termination::NoFurtherDecrease,
        }
    };
    Ok(LmReport {
        x,
        residuals: r,
        objective: obj,
        iterations,
        termination,
        trace,
    })
}
