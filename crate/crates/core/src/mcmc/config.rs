use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parameter blocks are updated each sweep. Disabled blocks stay at
/// their initial values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocks {
    pub beta: bool,
    pub r: bool,
    pub xi_bar: bool,
    pub eta: bool,
    pub gamma: bool,
    pub phi: bool,
}

impl Default for Blocks {
    fn default() -> Self {
        Self {
            beta: true,
            r: true,
            xi_bar: true,
            eta: true,
            gamma: true,
            phi: true,
        }
    }
}

/// Inverse-gamma prior used when the slab variance is learned instead of fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabVariancePrior {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub total_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Integration nodes drawn for the fit when none are supplied.
    pub rc_nodes: usize,
    /// TMH scale for `beta_bar`; `None` means `2.38 / sqrt(d_X)`.
    pub kappa_beta: Option<f64>,
    /// TMH scale for every `eta_t`; `None` means `2.38 / sqrt(J_t)` per market.
    pub kappa_eta: Option<f64>,
    pub kappa_xi: f64,
    pub kappa_r: f64,
    pub calibrate: bool,
    /// Acceptance band targeted during burn-in.
    pub target_accept: (f64, f64),
    /// Iterations per adaptation window.
    pub adapt_window: usize,
    pub newton_max_iter: usize,
    pub newton_grad_tol: f64,
    /// Worker threads; 0 uses the ambient rayon pool. Output does not depend on it.
    pub threads: usize,
    pub blocks: Blocks,
    pub learn_slab_variance: Option<SlabVariancePrior>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            total_draws: 10_000,
            burn_in: 3_000,
            thin: 1,
            seed: 0,
            rc_nodes: 200,
            kappa_beta: None,
            kappa_eta: None,
            kappa_xi: 0.1,
            kappa_r: 0.1,
            calibrate: true,
            target_accept: (0.3, 0.5),
            adapt_window: 100,
            newton_max_iter: 50,
            newton_grad_tol: 1e-8,
            threads: 0,
            blocks: Blocks::default(),
            learn_slab_variance: None,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.burn_in >= self.total_draws {
            return bad("burn_in must be smaller than total_draws");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.rc_nodes == 0 {
            return bad("rc_nodes must be at least 1");
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let kappas = [self.kappa_beta, self.kappa_eta, Some(self.kappa_xi), Some(self.kappa_r)];
        if !kappas.iter().flatten().all(|&k| positive(k)) {
            return bad("step scales must be positive");
        }
        let (lo, hi) = self.target_accept;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad("target_accept must satisfy 0 < lo < hi < 1");
        }
        if self.adapt_window == 0 {
            return bad("adapt_window must be at least 1");
        }
        if self.newton_max_iter == 0 || !positive(self.newton_grad_tol) {
            return bad("Newton settings must be positive");
        }
        if let Some(p) = self.learn_slab_variance {
            if !(positive(p.shape) && positive(p.scale)) {
                return bad("slab variance prior must have positive shape and scale");
            }
        }
        Ok(())
    }

    /// Number of retained draws, `(total_draws - burn_in) / thin`.
    pub fn retained(&self) -> usize {
        (self.total_draws - self.burn_in) / self.thin
    }
}
