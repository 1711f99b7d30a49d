//! Generic Metropolis-Hastings kernels.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::newton::{newton_mode, NewtonOptions, SmoothObjective};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct TmhOutcome {
    pub state: DVector<f64>,
    pub accepted: bool,
    /// The mode's curvature could not be made positive definite and a
    /// symmetric random-walk proposal was used instead.
    pub fallback: bool,
    /// Newton stopped at its iteration cap.
    pub capped: bool,
    pub log_accept_ratio: f64,
    /// Conditional mode found by the Newton search.
    pub mode: DVector<f64>,
}

fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub(crate) fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Tailored Metropolis-Hastings: an independence proposal
/// `N(mode, kappa^2 V)` with `V^{-1}` the negated Hessian at the conditional
/// mode. The acceptance ratio uses the density of the proposal actually drawn
/// from, so the step leaves the target invariant for any `kappa`.
///
/// The mode search starts at `warm_start` when given, else at `current`.
pub fn tmh_step<O, R>(
    objective: &O,
    current: &DVector<f64>,
    warm_start: Option<&DVector<f64>>,
    kappa: f64,
    opts: NewtonOptions,
    rng: &mut R,
) -> Result<TmhOutcome>
where
    O: SmoothObjective + ?Sized,
    R: Rng + ?Sized,
{
    let dim = objective.dim();
    let mode = newton_mode(objective, warm_start.unwrap_or(current), opts)?;
    let current_value = objective.value(current);
    let z = standard_normal_vector(dim, rng);
    match &mode.factor {
        Some(factor) => {
            // precision = L L'; L' y = z gives y ~ N(0, precision^{-1}).
            let y = factor
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .expect("Cholesky factor has a positive diagonal");
            let candidate = &mode.mode + &y * kappa;
            let log_q = |x: &DVector<f64>| -> f64 {
                let d = x - &mode.mode;
                -0.5 * (d.transpose() * &mode.precision * &d)[(0, 0)] / (kappa * kappa)
            };
            let candidate_value = objective.value(&candidate);
            let log_ratio = candidate_value - current_value + log_q(current) - log_q(&candidate);
            let accepted = accept(log_ratio, rng);
            Ok(TmhOutcome {
                state: if accepted { candidate } else { current.clone() },
                accepted,
                fallback: false,
                capped: !mode.converged && mode.iterations >= opts.max_iter,
                log_accept_ratio: log_ratio,
                mode: mode.mode.clone(),
            })
        }
        None => {
            let scales = DVector::from_iterator(
                dim,
                mode.precision.diagonal().iter().map(|p| 1.0 / p.abs().max(1.0).sqrt()),
            );
            let candidate = current + z.component_mul(&scales) * kappa;
            let log_ratio = objective.value(&candidate) - current_value;
            let accepted = accept(log_ratio, rng);
            Ok(TmhOutcome {
                state: if accepted { candidate } else { current.clone() },
                accepted,
                fallback: true,
                capped: !mode.converged && mode.iterations >= opts.max_iter,
                log_accept_ratio: log_ratio,
                mode: mode.mode.clone(),
            })
        }
    }
}

/// Random-walk Metropolis step with proposal `current + L z`, where `L` is a
/// lower-triangular factor of the proposal covariance.
pub fn rwmh_step<F, R>(
    log_target: F,
    current: &[f64],
    current_value: f64,
    proposal_factor: &DMatrix<f64>,
    rng: &mut R,
) -> (Vec<f64>, f64, bool)
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let z = standard_normal_vector(current.len(), rng);
    let step = proposal_factor * z;
    let candidate: Vec<f64> = current.iter().zip(step.iter()).map(|(c, s)| c + s).collect();
    let candidate_value = log_target(&candidate);
    let ratio = candidate_value - current_value;
    if accept(ratio, rng) && candidate_value.is_finite() {
        (candidate, candidate_value, true)
    } else {
        (current.to_vec(), current_value, false)
    }
}
