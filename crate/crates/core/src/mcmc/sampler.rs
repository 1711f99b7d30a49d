//! One-sweep block updates of the posterior sampler.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use rayon::prelude::*;

use super::config::McmcConfig;
use super::newton::{NewtonOptions, SmoothObjective};
use super::rng::{substream, Stream};
use super::samples::{BlockCounters, Diagnostics, KernelParams};
use super::steps::{rwmh_step, tmh_step};
use crate::error::{Error, Result};
use crate::model::{
    beta_terms, delta_unchecked, eta_prior_terms, eta_terms, ChoiceProbs, Dataset, Derivatives, MarketData,
    NodeOffsets, ParamState, RcDraws,
};
use crate::priors::{
    gamma_success_prob, log_normal_density, log_prior_beta, log_prior_eta, log_prior_r, log_prior_xi_bar,
    phi_posterior, PriorConfig,
};

/// Conditional log posterior of `beta_bar` given every other block.
pub(crate) struct BetaObjective<'s> {
    pub(crate) data: &'s Dataset,
    pub(crate) offsets: &'s [NodeOffsets],
    pub(crate) state: &'s ParamState,
    pub(crate) prior: &'s PriorConfig,
}

impl SmoothObjective for BetaObjective<'_> {
    fn dim(&self) -> usize {
        self.data.d_x()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let beta = x.as_slice();
        let parts: Vec<f64> = (0..self.data.market_count())
            .into_par_iter()
            .map(|t| {
                let m = self.data.market(t);
                let delta = delta_unchecked(m.x(), beta, self.state.xi_bar[t], &self.state.eta[t]);
                ChoiceProbs::new(&delta, &self.offsets[t]).log_likelihood(m)
            })
            .collect();
        parts.iter().sum::<f64>() + log_prior_beta(beta, self.prior)
    }

    fn derivatives(&self, x: &DVector<f64>) -> Derivatives {
        let beta = x.as_slice();
        let parts: Vec<Derivatives> = (0..self.data.market_count())
            .into_par_iter()
            .map(|t| {
                let m = self.data.market(t);
                let delta = delta_unchecked(m.x(), beta, self.state.xi_bar[t], &self.state.eta[t]);
                beta_terms(m, &delta, &self.offsets[t])
            })
            .collect();
        let mut total = Derivatives::zeros(self.dim());
        for p in &parts {
            total.accumulate(p);
        }
        total.value += log_prior_beta(beta, self.prior);
        for k in 0..beta.len() {
            total.gradient[k] -= (beta[k] - self.prior.mu_beta[k]) / self.prior.v_beta[k];
            total.hessian[(k, k)] -= 1.0 / self.prior.v_beta[k];
        }
        total
    }
}

/// Conditional log posterior of one market's `eta_t` given every other block.
pub(crate) struct EtaObjective<'s> {
    pub(crate) market: &'s MarketData,
    pub(crate) offsets: &'s NodeOffsets,
    pub(crate) beta_bar: &'s [f64],
    pub(crate) xi_bar: f64,
    pub(crate) gamma: &'s [bool],
    pub(crate) prior: &'s PriorConfig,
}

impl SmoothObjective for EtaObjective<'_> {
    fn dim(&self) -> usize {
        self.market.products()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let delta = delta_unchecked(self.market.x(), self.beta_bar, self.xi_bar, x.as_slice());
        ChoiceProbs::new(&delta, self.offsets).log_likelihood(self.market)
            + log_prior_eta(x.as_slice(), self.gamma, self.prior)
    }

    fn derivatives(&self, x: &DVector<f64>) -> Derivatives {
        let delta = delta_unchecked(self.market.x(), self.beta_bar, self.xi_bar, x.as_slice());
        let mut d = eta_terms(self.market, &delta, self.offsets);
        eta_prior_terms(&mut d, x.as_slice(), self.gamma, self.prior);
        d
    }
}

fn market_ll(market: &MarketData, offsets: &NodeOffsets, beta: &[f64], xi_bar: f64, eta: &[f64]) -> f64 {
    let delta = delta_unchecked(market.x(), beta, xi_bar, eta);
    ChoiceProbs::new(&delta, offsets).log_likelihood(market)
}

pub(crate) fn all_offsets(data: &Dataset, r: &[f64], draws: &RcDraws) -> Vec<NodeOffsets> {
    let sigma: Vec<f64> = r.iter().map(|v| v.exp()).collect();
    (0..data.market_count())
        .into_par_iter()
        .map(|t| NodeOffsets::new(data.market(t), data.rc_columns(), &sigma, draws))
        .collect()
}

/// Default proposal scales: `2.38 / sqrt(dim)` for the tailored blocks.
pub(crate) fn initial_kernel(data: &Dataset, cfg: &McmcConfig) -> KernelParams {
    let d_rc = data.d_rc();
    let mut s_r = vec![0.0; d_rc * d_rc];
    for k in 0..d_rc {
        s_r[k * d_rc + k] = 1.0;
    }
    KernelParams {
        kappa_beta: cfg.kappa_beta.unwrap_or(2.38 / (data.d_x().max(1) as f64).sqrt()),
        kappa_eta: data
            .markets()
            .iter()
            .map(|m| cfg.kappa_eta.unwrap_or(2.38 / (m.products() as f64).sqrt()))
            .collect(),
        kappa_xi: cfg.kappa_xi,
        kappa_r: cfg.kappa_r,
        s_r,
    }
}

/// Holds the chain state, the node offsets cached for the current `r`, and
/// the kernel parameters. Each update draws from a substream keyed by
/// `(seed, iteration, block, market)`.
pub struct Sampler<'a> {
    data: &'a Dataset,
    draws: &'a RcDraws,
    prior: PriorConfig,
    seed: u64,
    newton: NewtonOptions,
    learn_slab: Option<super::config::SlabVariancePrior>,
    state: ParamState,
    offsets: Vec<NodeOffsets>,
    kernel: KernelParams,
    /// Last conditional modes, used to start the next Newton search.
    beta_mode: Option<DVector<f64>>,
    eta_modes: Vec<Option<DVector<f64>>>,
    iteration: u64,
    counters: BlockCounters,
    diagnostics: Diagnostics,
}

impl<'a> Sampler<'a> {
    pub fn new(
        data: &'a Dataset,
        draws: &'a RcDraws,
        prior: &PriorConfig,
        cfg: &McmcConfig,
        init: ParamState,
    ) -> Result<Self> {
        cfg.validate()?;
        prior.validate(data.d_x(), data.d_rc())?;
        init.check_shape(data)?;
        if data.d_rc() > 0 && draws.dim() != data.d_rc() {
            return Err(Error::InvalidConfig(format!(
                "integration nodes have dimension {}, expected {}",
                draws.dim(),
                data.d_rc()
            )));
        }
        let offsets = all_offsets(data, &init.r, draws);
        let sampler = Self {
            data,
            draws,
            prior: prior.clone(),
            seed: cfg.seed,
            newton: NewtonOptions {
                max_iter: cfg.newton_max_iter,
                grad_tol: cfg.newton_grad_tol,
            },
            learn_slab: cfg.learn_slab_variance,
            state: init,
            offsets,
            kernel: initial_kernel(data, cfg),
            beta_mode: None,
            eta_modes: vec![None; data.market_count()],
            iteration: 0,
            counters: BlockCounters::default(),
            diagnostics: Diagnostics::default(),
        };
        sampler.check_finite()?;
        Ok(sampler)
    }

    fn check_finite(&self) -> Result<()> {
        let s = &self.state;
        let bad = |block: &str| Err(Error::NonFinite(format!("log posterior at initialization (block {block})")));
        if !log_prior_beta(&s.beta_bar, &self.prior).is_finite() {
            return bad("beta_bar");
        }
        if !log_prior_r(&s.r, &self.prior).is_finite() {
            return bad("r");
        }
        if !log_prior_xi_bar(&s.xi_bar, &self.prior).is_finite() {
            return bad("xi_bar");
        }
        for t in 0..self.data.market_count() {
            if !log_prior_eta(&s.eta[t], &s.gamma[t], &self.prior).is_finite() {
                return bad("eta");
            }
            if !(s.phi[t] > 0.0 && s.phi[t] < 1.0) {
                return bad("phi");
            }
        }
        if !self.log_likelihood().is_finite() {
            return bad("likelihood");
        }
        Ok(())
    }

    pub fn state(&self) -> &ParamState {
        &self.state
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut KernelParams {
        &mut self.kernel
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub(crate) fn diagnostics_mut(&mut self) -> &mut Diagnostics {
        &mut self.diagnostics
    }

    /// Acceptance counters accumulated since the last call.
    pub fn take_counters(&mut self) -> BlockCounters {
        std::mem::take(&mut self.counters)
    }

    pub fn log_likelihood(&self) -> f64 {
        let s = &self.state;
        let parts: Vec<f64> = (0..self.data.market_count())
            .into_par_iter()
            .map(|t| market_ll(self.data.market(t), &self.offsets[t], &s.beta_bar, s.xi_bar[t], &s.eta[t]))
            .collect();
        parts.iter().sum()
    }

    /// Tailored MH update of `beta_bar`.
    pub fn tmh_update_beta(&mut self) -> Result<bool> {
        let mut rng = substream(self.seed, self.iteration, Stream::Beta, 0);
        let objective = BetaObjective {
            data: self.data,
            offsets: &self.offsets,
            state: &self.state,
            prior: &self.prior,
        };
        let current = DVector::from_column_slice(&self.state.beta_bar);
        let outcome = tmh_step(
            &objective,
            &current,
            self.beta_mode.as_ref(),
            self.kernel.kappa_beta,
            self.newton,
            &mut rng,
        )?;
        self.beta_mode = Some(outcome.mode.clone());
        self.diagnostics.newton_capped += outcome.capped as u64;
        self.diagnostics.rw_fallbacks += outcome.fallback as u64;
        self.counters.beta.record(outcome.accepted);
        self.state.beta_bar = outcome.state.as_slice().to_vec();
        Ok(outcome.accepted)
    }

    /// Tailored MH update of every `eta_t`, markets in parallel.
    pub fn tmh_update_eta(&mut self) -> Result<u64> {
        let (seed, iteration, newton) = (self.seed, self.iteration, self.newton);
        let state = &self.state;
        let results: Vec<_> = (0..self.data.market_count())
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(seed, iteration, Stream::Eta, t as u64);
                let objective = EtaObjective {
                    market: self.data.market(t),
                    offsets: &self.offsets[t],
                    beta_bar: &state.beta_bar,
                    xi_bar: state.xi_bar[t],
                    gamma: &state.gamma[t],
                    prior: &self.prior,
                };
                let current = DVector::from_column_slice(&state.eta[t]);
                tmh_step(
                    &objective,
                    &current,
                    self.eta_modes[t].as_ref(),
                    self.kernel.kappa_eta[t],
                    newton,
                    &mut rng,
                )
            })
            .collect::<Result<_>>()?;
        let mut accepted = 0;
        for (t, outcome) in results.into_iter().enumerate() {
            self.diagnostics.newton_capped += outcome.capped as u64;
            self.diagnostics.rw_fallbacks += outcome.fallback as u64;
            self.counters.eta.record(outcome.accepted);
            accepted += outcome.accepted as u64;
            self.state.eta[t] = outcome.state.as_slice().to_vec();
            self.eta_modes[t] = Some(outcome.mode);
        }
        Ok(accepted)
    }

    /// Random-walk update of each market intercept with proposal
    /// `N(xi_bar_t, kappa_xi^2)`.
    pub fn rwmh_update_xi_bar(&mut self) -> u64 {
        let (seed, iteration) = (self.seed, self.iteration);
        let state = &self.state;
        let factor = DMatrix::from_element(1, 1, self.kernel.kappa_xi);
        let results: Vec<(f64, bool)> = (0..self.data.market_count())
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(seed, iteration, Stream::XiBar, t as u64);
                let market = self.data.market(t);
                let target = |x: &[f64]| {
                    market_ll(market, &self.offsets[t], &state.beta_bar, x[0], &state.eta[t])
                        + log_normal_density(x[0], self.prior.mu_xi, self.prior.v_xi)
                };
                let current = [state.xi_bar[t]];
                let (next, _, accepted) = rwmh_step(target, &current, target(&current), &factor, &mut rng);
                (next[0], accepted)
            })
            .collect();
        let mut accepted = 0;
        for (t, (value, ok)) in results.into_iter().enumerate() {
            self.state.xi_bar[t] = value;
            self.counters.xi_bar.record(ok);
            accepted += ok as u64;
        }
        accepted
    }

    fn r_proposal_factor(&self) -> DMatrix<f64> {
        let d = self.data.d_rc();
        let scale = DMatrix::from_row_slice(d, d, &self.kernel.s_r) * self.kernel.kappa_r;
        Cholesky::new(scale)
            .map(|c| c.l())
            .unwrap_or_else(|| DMatrix::identity(d, d) * self.kernel.kappa_r.sqrt())
    }

    /// Joint random-walk update of `r` with proposal `N(r, kappa_r S_r)`.
    pub fn rwmh_update_r(&mut self) -> bool {
        if self.data.d_rc() == 0 {
            return false;
        }
        let mut rng = substream(self.seed, self.iteration, Stream::R, 0);
        let state = &self.state;
        let target = |r: &[f64]| {
            let offsets = all_offsets(self.data, r, self.draws);
            let parts: Vec<f64> = (0..self.data.market_count())
                .into_par_iter()
                .map(|t| market_ll(self.data.market(t), &offsets[t], &state.beta_bar, state.xi_bar[t], &state.eta[t]))
                .collect();
            parts.iter().sum::<f64>() + log_prior_r(r, &self.prior)
        };
        let current_value = self.log_likelihood() + log_prior_r(&state.r, &self.prior);
        let factor = self.r_proposal_factor();
        let (next, _, accepted) = rwmh_step(target, &state.r, current_value, &factor, &mut rng);
        self.counters.r.record(accepted);
        if accepted {
            self.offsets = all_offsets(self.data, &next, self.draws);
            self.state.r = next;
        }
        accepted
    }

    /// Exact Gibbs draw of every indicator from its Bernoulli conditional.
    pub fn gibbs_update_gamma(&mut self) {
        let (seed, iteration) = (self.seed, self.iteration);
        let state = &self.state;
        let prior = &self.prior;
        let fresh: Vec<Vec<bool>> = (0..self.data.market_count())
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(seed, iteration, Stream::Gamma, t as u64);
                state.eta[t]
                    .iter()
                    .map(|&e| {
                        let p = gamma_success_prob(e, state.phi[t], prior);
                        rng.random::<f64>() < p
                    })
                    .collect()
            })
            .collect();
        self.state.gamma = fresh;
    }

    /// Exact Gibbs draw of each `phi_t` from its conjugate Beta conditional.
    pub fn gibbs_update_phi(&mut self) {
        let (seed, iteration) = (self.seed, self.iteration);
        for t in 0..self.data.market_count() {
            let mut rng = substream(seed, iteration, Stream::Phi, t as u64);
            let (a, b) = phi_posterior(&self.state.gamma[t], &self.prior);
            let beta = Beta::new(a, b).expect("conjugate Beta parameters are positive");
            // Keep phi strictly inside (0, 1) where the Beta sampler rounds to a bound.
            self.state.phi[t] = beta.sample(&mut rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        }
    }

    /// Conjugate inverse-gamma draw of the slab variance when it is learned.
    pub fn update_slab_variance(&mut self) -> Option<f64> {
        let hyper = self.learn_slab?;
        let mut rng = substream(self.seed, self.iteration, Stream::Slab, 0);
        let (mut n, mut ss) = (0.0, 0.0);
        for (eta, gamma) in self.state.eta.iter().zip(&self.state.gamma) {
            for (&e, &g) in eta.iter().zip(gamma) {
                if g {
                    n += 1.0;
                    ss += e * e;
                }
            }
        }
        let precision = Gamma::new(hyper.shape + 0.5 * n, 1.0 / (hyper.scale + 0.5 * ss))
            .expect("inverse-gamma parameters are positive")
            .sample(&mut rng);
        let tau1 = (1.0 / precision).max(self.prior.tau0_sq * (1.0 + 1e-9));
        self.prior.tau1_sq = tau1;
        Some(tau1)
    }

    /// One full sweep in the fixed order `beta_bar, r, xi_bar, eta, gamma, phi`.
    pub fn sweep(&mut self, blocks: &super::config::Blocks) -> Result<()> {
        if blocks.beta {
            self.tmh_update_beta()?;
        }
        if blocks.r {
            self.rwmh_update_r();
        }
        if blocks.xi_bar {
            self.rwmh_update_xi_bar();
        }
        if blocks.eta {
            self.tmh_update_eta()?;
        }
        if blocks.gamma {
            self.gibbs_update_gamma();
        }
        if blocks.phi {
            self.gibbs_update_phi();
        }
        self.update_slab_variance();
        self.iteration += 1;
        Ok(())
    }

    pub fn into_state(self) -> ParamState {
        self.state
    }
}
