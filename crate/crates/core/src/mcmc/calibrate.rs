//! Burn-in tuning of the proposal scales.
//!
//! Every window the acceptance rate of each Metropolis block is compared with
//! the target band: above it the scale grows by 10%, below it shrinks by 10%.
//! All blocks adapt jointly. Adaptation stops at the end of burn-in, so the
//! retained chain runs a fixed kernel.

use super::samples::{Block, BlockCounters, CalibrationRecord, KernelParams};

pub const GROW: f64 = 1.1;
pub const SHRINK: f64 = 0.9;
const KAPPA_MIN: f64 = 1e-4;
const KAPPA_MAX: f64 = 1e4;

/// One multiplicative adaptation of a proposal scale.
pub fn adapt_kappa(kappa: f64, acceptance: f64, band: (f64, f64)) -> f64 {
    let next = if acceptance > band.1 {
        kappa * GROW
    } else if acceptance < band.0 {
        kappa * SHRINK
    } else {
        kappa
    };
    next.clamp(KAPPA_MIN, KAPPA_MAX)
}

/// Applies one window's acceptance rates to `kernel`, returning the log
/// entries. Blocks with no proposals in the window are left alone.
pub(crate) fn adapt_window(
    kernel: &mut KernelParams,
    window: &BlockCounters,
    band: (f64, f64),
    iteration: usize,
) -> Vec<CalibrationRecord> {
    let mut log = Vec::new();
    for block in Block::METROPOLIS {
        let counter = window.get(block);
        if counter.proposed == 0 {
            continue;
        }
        let rate = counter.rate();
        let before = match block {
            Block::Beta => kernel.kappa_beta,
            Block::R => kernel.kappa_r,
            Block::XiBar => kernel.kappa_xi,
            Block::Eta => kernel.kappa_eta.first().copied().unwrap_or(1.0),
        };
        let after = adapt_kappa(before, rate, band);
        let factor = after / before;
        match block {
            Block::Beta => kernel.kappa_beta = after,
            Block::R => kernel.kappa_r = after,
            Block::XiBar => kernel.kappa_xi = after,
            Block::Eta => {
                for k in &mut kernel.kappa_eta {
                    *k = (*k * factor).clamp(KAPPA_MIN, KAPPA_MAX);
                }
            }
        }
        log.push(CalibrationRecord {
            iteration,
            block,
            acceptance: rate,
            kappa_before: before,
            kappa_after: after,
        });
    }
    log
}

/// Sample covariance of stored `r` draws (row-major), or `None` when it is
/// not usefully positive definite.
pub(crate) fn draw_covariance(history: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = history.len();
    let d = history.first()?.len();
    if n < 2 * d + 2 || d == 0 {
        return None;
    }
    let mut mean = vec![0.0; d];
    for row in history {
        for k in 0..d {
            mean[k] += row[k] / n as f64;
        }
    }
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for row in history {
        for k in 0..d {
            for l in 0..d {
                cov[(k, l)] += (row[k] - mean[k]) * (row[l] - mean[l]) / (n - 1) as f64;
            }
        }
    }
    let min_diag = cov.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(min_diag > 1e-12) || nalgebra::Cholesky::new(cov.clone()).is_none() {
        return None;
    }
    Some(cov.transpose().as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inside_band_is_unchanged() {
        assert_eq!(adapt_kappa(0.7, 0.4, (0.3, 0.5)), 0.7);
        assert_eq!(adapt_kappa(0.7, 0.3, (0.3, 0.5)), 0.7);
        assert_eq!(adapt_kappa(0.7, 0.5, (0.3, 0.5)), 0.7);
    }

    #[test]
    fn grows_and_shrinks() {
        assert!((adapt_kappa(1.0, 0.9, (0.3, 0.5)) - 1.1).abs() < 1e-15);
        assert!((adapt_kappa(1.0, 0.1, (0.3, 0.5)) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn eta_scales_move_together() {
        let mut kernel = KernelParams {
            kappa_beta: 1.0,
            kappa_eta: vec![1.0, 2.0],
            kappa_xi: 0.1,
            kappa_r: 0.1,
            s_r: vec![1.0],
        };
        let mut window = BlockCounters::default();
        window.eta.add(100, 90);
        let log = adapt_window(&mut kernel, &window, (0.3, 0.5), 99);
        assert_eq!(log.len(), 1);
        assert!((kernel.kappa_eta[0] - 1.1).abs() < 1e-12);
        assert!((kernel.kappa_eta[1] - 2.2).abs() < 1e-12);
        assert_eq!(kernel.kappa_xi, 0.1);
    }

    #[test]
    fn covariance_needs_spread() {
        let flat = vec![vec![0.5]; 50];
        assert!(draw_covariance(&flat).is_none());
        let spread: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 5) as f64]).collect();
        let cov = draw_covariance(&spread).unwrap();
        assert!((cov[0] - 2.0 * 50.0 / 49.0).abs() < 1e-12);
    }
}
