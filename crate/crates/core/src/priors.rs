//! Prior densities and the conjugate conditionals of the sparsity layer.
//!
//! The deviations `eta_jt` carry a two-component normal mixture: a tight spike
//! `N(0, tau0_sq)` selected by `gamma_jt = 0` and a diffuse slab `N(0, tau1_sq)`
//! selected by `gamma_jt = 1`. Indicators are Bernoulli(`phi_t`) with a Beta
//! prior on `phi_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Slab/spike variance ratios above this are known to cause poor mixing.
pub const TAU_RATIO_WARNING: f64 = 10_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub mu_beta: Vec<f64>,
    pub v_beta: Vec<f64>,
    pub mu_xi: f64,
    pub v_xi: f64,
    pub v_r: Vec<f64>,
    pub tau0_sq: f64,
    pub tau1_sq: f64,
    pub a_phi: f64,
    pub b_phi: f64,
}

impl PriorConfig {
    /// `beta_bar ~ N(0, 10 I)`, `xi_bar_t ~ N(0, 10)`, `r_k ~ N(0, 0.5)`,
    /// `(tau0_sq, tau1_sq) = (1e-3, 1)`, `phi_t ~ Beta(1, 1)`.
    pub fn defaults(d_x: usize, d_rc: usize) -> Self {
        Self {
            mu_beta: vec![0.0; d_x],
            v_beta: vec![10.0; d_x],
            mu_xi: 0.0,
            v_xi: 10.0,
            v_r: vec![0.5; d_rc],
            tau0_sq: 1e-3,
            tau1_sq: 1.0,
            a_phi: 1.0,
            b_phi: 1.0,
        }
    }

    pub fn validate(&self, d_x: usize, d_rc: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.mu_beta.len() != d_x || self.v_beta.len() != d_x {
            return bad(format!("prior on beta_bar must have {d_x} entries"));
        }
        if self.v_r.len() != d_rc {
            return bad(format!("prior on r must have {d_rc} entries"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.v_beta.iter().chain(&self.v_r).all(|&v| positive(v)) || !positive(self.v_xi) {
            return bad("prior variances must be positive and finite".into());
        }
        if !self.mu_beta.iter().all(|v| v.is_finite()) || !self.mu_xi.is_finite() {
            return bad("prior means must be finite".into());
        }
        if !(positive(self.tau0_sq) && positive(self.tau1_sq)) {
            return bad("tau0_sq and tau1_sq must be positive".into());
        }
        if self.tau0_sq >= self.tau1_sq {
            return bad(format!(
                "spike variance tau0_sq={} must be below slab variance tau1_sq={}",
                self.tau0_sq, self.tau1_sq
            ));
        }
        if !(positive(self.a_phi) && positive(self.b_phi)) {
            return bad("Beta prior parameters must be positive".into());
        }
        Ok(())
    }

    pub fn tau_ratio(&self) -> f64 {
        self.tau1_sq / self.tau0_sq
    }

    /// True when the slab/spike ratio exceeds [`TAU_RATIO_WARNING`].
    pub fn tau_ratio_too_large(&self) -> bool {
        self.tau_ratio() > TAU_RATIO_WARNING
    }

    pub fn eta_variance(&self, gamma: bool) -> f64 {
        if gamma {
            self.tau1_sq
        } else {
            self.tau0_sq
        }
    }
}

pub fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * (LN_2PI + var.ln() + z * z / var)
}

pub fn log_prior_beta(beta_bar: &[f64], cfg: &PriorConfig) -> f64 {
    beta_bar
        .iter()
        .zip(cfg.mu_beta.iter().zip(&cfg.v_beta))
        .map(|(&b, (&m, &v))| log_normal_density(b, m, v))
        .sum()
}

pub fn log_prior_r(r: &[f64], cfg: &PriorConfig) -> f64 {
    r.iter().zip(&cfg.v_r).map(|(&x, &v)| log_normal_density(x, 0.0, v)).sum()
}

pub fn log_prior_xi_bar(xi_bar: &[f64], cfg: &PriorConfig) -> f64 {
    xi_bar.iter().map(|&x| log_normal_density(x, cfg.mu_xi, cfg.v_xi)).sum()
}

/// `sum_j log N(eta_j | 0, gamma_j tau1_sq + (1 - gamma_j) tau0_sq)`.
pub fn log_prior_eta(eta: &[f64], gamma: &[bool], cfg: &PriorConfig) -> f64 {
    eta.iter()
        .zip(gamma)
        .map(|(&e, &g)| log_normal_density(e, 0.0, cfg.eta_variance(g)))
        .sum()
}

/// Full-conditional probability that `gamma_jt = 1`, computed as the logistic
/// of the log-odds so neither normal density is ever formed on its own.
pub fn gamma_success_prob(eta: f64, phi: f64, cfg: &PriorConfig) -> f64 {
    if phi <= 0.0 {
        return 0.0;
    }
    if phi >= 1.0 {
        return 1.0;
    }
    let log_odds = phi.ln() - (-phi).ln_1p() + log_normal_density(eta, 0.0, cfg.tau1_sq)
        - log_normal_density(eta, 0.0, cfg.tau0_sq);
    if log_odds.is_nan() {
        // Only reachable for infinite eta: the wider slab dominates the tail.
        return if cfg.tau1_sq > cfg.tau0_sq { 1.0 } else { 0.0 };
    }
    expit(log_odds)
}

/// Conjugate Beta parameters `(a + sum gamma, b + sum (1 - gamma))`.
pub fn phi_posterior(gamma: &[bool], cfg: &PriorConfig) -> (f64, f64) {
    let ones = gamma.iter().filter(|&&g| g).count() as f64;
    let zeros = gamma.len() as f64 - ones;
    (cfg.a_phi + ones, cfg.b_phi + zeros)
}

pub(crate) fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
