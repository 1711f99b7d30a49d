//! Damped Newton ascent to a conditional-posterior mode.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::Derivatives;

/// A twice-differentiable log density.
pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn derivatives(&self, x: &DVector<f64>) -> Derivatives;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonMode {
    pub mode: DVector<f64>,
    pub value: f64,
    /// Negated Hessian at the mode plus `ridge * I`.
    pub precision: DMatrix<f64>,
    /// Cholesky factor of `precision`; `None` when it stayed indefinite after
    /// the full ridge escalation.
    pub factor: Option<Cholesky<f64, Dyn>>,
    pub ridge: f64,
    pub iterations: usize,
    /// Gradient sup-norm fell below the tolerance.
    pub converged: bool,
    pub grad_norm: f64,
}

const RIDGE_START: f64 = 1e-8;
const RIDGE_LIMIT: f64 = 1e-2;

/// Factorizes `-hessian`, adding `c (1 + max|diag|) I` with `c` escalated
/// tenfold from `1e-8` up to `1e-2` until it is positive definite.
pub(crate) fn regularized_precision(hessian: &DMatrix<f64>) -> (DMatrix<f64>, Option<Cholesky<f64, Dyn>>, f64) {
    let neg = -hessian;
    if let Some(ch) = Cholesky::new(neg.clone()) {
        return (neg, Some(ch), 0.0);
    }
    let scale = 1.0 + neg.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut c = RIDGE_START;
    while c <= RIDGE_LIMIT * (1.0 + 1e-12) {
        let ridge = c * scale;
        let mut m = neg.clone();
        for k in 0..m.nrows() {
            m[(k, k)] += ridge;
        }
        if let Some(ch) = Cholesky::new(m.clone()) {
            return (m, Some(ch), ridge);
        }
        c *= 10.0;
    }
    (neg, None, f64::NAN)
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Maximizes `objective` from `start`. Stops when the gradient sup-norm is
/// below `grad_tol`, when no further ascent is possible at working precision,
/// or after `max_iter` iterations (reported through `converged = false`).
pub fn newton_mode<O: SmoothObjective + ?Sized>(
    objective: &O,
    start: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<NewtonMode> {
    let mut x = start.clone();
    let mut d = objective.derivatives(&x);
    if !d.value.is_finite() || d.gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("objective at Newton start".into()));
    }
    let mut iterations = 0;
    let mut converged = sup_norm(&d.gradient) <= opts.grad_tol;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let (_, factor, _) = regularized_precision(&d.hessian);
        let step = match &factor {
            Some(ch) => ch.solve(&d.gradient),
            None => {
                // Indefinite even after ridging: scaled gradient ascent.
                let scale = 1.0 + d.hessian.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                &d.gradient / scale
            }
        };
        let slope = d.gradient.dot(&step);
        if slope <= 1e-14 * (1.0 + d.value.abs()) {
            // Newton decrement below rounding noise of the objective.
            x += &step;
            let next = objective.derivatives(&x);
            if next.value.is_finite() && next.value >= d.value - 1e-9 * (1.0 + d.value.abs()) {
                d = next;
            } else {
                x -= &step;
            }
            converged = sup_norm(&d.gradient) <= opts.grad_tol;
            break;
        }
        // The full step is tried with derivatives since it is usually accepted.
        let full = &x + &step;
        let trial = objective.derivatives(&full);
        if trial.value.is_finite() && trial.value >= d.value + 1e-4 * slope {
            x = full;
            d = trial;
        } else {
            let mut t = 0.5;
            let mut moved = false;
            for _ in 0..60 {
                let candidate = &x + &step * t;
                let value = objective.value(&candidate);
                if value.is_finite() && value >= d.value + 1e-4 * t * slope {
                    x = candidate;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
            d = objective.derivatives(&x);
        }
        converged = sup_norm(&d.gradient) <= opts.grad_tol;
    }
    let (precision, factor, ridge) = regularized_precision(&d.hessian);
    Ok(NewtonMode {
        grad_norm: sup_norm(&d.gradient),
        mode: x,
        value: d.value,
        precision,
        factor,
        ridge,
        iterations,
        converged,
    })
}
