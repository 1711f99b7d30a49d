//! Chain driver: initialization, burn-in calibration, thinning.

use nalgebra::DVector;

use super::calibrate::{adapt_window, draw_covariance};
use super::config::{Blocks, McmcConfig, SlabVariancePrior};
use super::newton::{newton_mode, NewtonOptions, SmoothObjective};
use super::rng::{substream, Stream};
use super::sampler::{all_offsets, BetaObjective, Sampler};
use super::samples::{BlockCounters, PosteriorSamples};
use crate::error::{Error, Result};
use crate::model::{delta_unchecked, eta_terms, ChoiceProbs, Dataset, Derivatives, MarketData, NodeOffsets, ParamState, RcDraws};
use crate::priors::{log_normal_density, PriorConfig};

const INIT_ROUNDS: usize = 100;
const INIT_TOL: f64 = 1e-6;
/// Burn-in shorter than this keeps the identity scale matrix for `r`.
const MIN_BURN_IN_FOR_SCALE: usize = 200;

/// Conditional log posterior of one market intercept.
struct XiObjective<'s> {
    market: &'s MarketData,
    offsets: &'s NodeOffsets,
    beta_bar: &'s [f64],
    eta: &'s [f64],
    prior: &'s PriorConfig,
}

impl SmoothObjective for XiObjective<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let delta = delta_unchecked(self.market.x(), self.beta_bar, x[0], self.eta);
        ChoiceProbs::new(&delta, self.offsets).log_likelihood(self.market)
            + log_normal_density(x[0], self.prior.mu_xi, self.prior.v_xi)
    }

    fn derivatives(&self, x: &DVector<f64>) -> Derivatives {
        let delta = delta_unchecked(self.market.x(), self.beta_bar, x[0], self.eta);
        let d = eta_terms(self.market, &delta, self.offsets);
        let mut out = Derivatives::zeros(1);
        out.value = d.value + log_normal_density(x[0], self.prior.mu_xi, self.prior.v_xi);
        out.gradient[0] = d.gradient.sum() - (x[0] - self.prior.mu_xi) / self.prior.v_xi;
        out.hessian[(0, 0)] = d.hessian.sum() - 1.0 / self.prior.v_xi;
        out
    }
}

/// Starting state: `eta = 0`, every `gamma` in the spike, `phi = 0.5`,
/// `r = ln 0.1`, and `(beta_bar, xi_bar)` at the joint conditional mode under
/// those values, found by alternating Newton searches.
pub fn initial_state(data: &Dataset, prior: &PriorConfig, draws: &RcDraws, cfg: &McmcConfig) -> Result<ParamState> {
    let mut state = ParamState::zeros(data);
    let offsets = all_offsets(data, &state.r, draws);
    let opts = NewtonOptions {
        max_iter: cfg.newton_max_iter,
        grad_tol: cfg.newton_grad_tol,
    };
    for _ in 0..INIT_ROUNDS {
        let mut change: f64 = 0.0;
        if cfg.blocks.beta {
            let objective = BetaObjective {
                data,
                offsets: &offsets,
                state: &state,
                prior,
            };
            let start = DVector::from_column_slice(&state.beta_bar);
            let mode = newton_mode(&objective, &start, opts)?;
            change = change.max((&mode.mode - &start).amax());
            state.beta_bar = mode.mode.as_slice().to_vec();
        }
        if cfg.blocks.xi_bar {
            for t in 0..data.market_count() {
                let objective = XiObjective {
                    market: data.market(t),
                    offsets: &offsets[t],
                    beta_bar: &state.beta_bar,
                    eta: &state.eta[t],
                    prior,
                };
                let start = DVector::from_element(1, state.xi_bar[t]);
                let mode = newton_mode(&objective, &start, opts)?;
                change = change.max((mode.mode[0] - state.xi_bar[t]).abs());
                state.xi_bar[t] = mode.mode[0];
            }
        }
        if change < INIT_TOL || !(cfg.blocks.beta && cfg.blocks.xi_bar) {
            break;
        }
    }
    Ok(state)
}

/// Integration nodes for a fit: `rc_nodes` standard-normal draws from the
/// node substream of `seed`, fixed for the whole chain.
pub fn fit_nodes(data: &Dataset, cfg: &McmcConfig) -> Result<RcDraws> {
    let mut rng = substream(cfg.seed, 0, Stream::Nodes, 0);
    RcDraws::standard_normal(cfg.rc_nodes, data.d_rc(), &mut rng)
}

/// Runs one chain with fresh integration nodes and the default start.
pub fn run_chain(data: &Dataset, prior: &PriorConfig, cfg: &McmcConfig) -> Result<PosteriorSamples> {
    let draws = fit_nodes(data, cfg)?;
    run_chain_with(data, prior, cfg, &draws, None)
}

/// Runs one chain on the given nodes, from `init` or the default start.
pub fn run_chain_with(
    data: &Dataset,
    prior: &PriorConfig,
    cfg: &McmcConfig,
    draws: &RcDraws,
    init: Option<ParamState>,
) -> Result<PosteriorSamples> {
    cfg.validate()?;
    prior.validate(data.d_x(), data.d_rc())?;
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| drive(data, prior, cfg, draws, init))
    } else {
        drive(data, prior, cfg, draws, init)
    }
}

fn drive(
    data: &Dataset,
    prior: &PriorConfig,
    cfg: &McmcConfig,
    draws: &RcDraws,
    init: Option<ParamState>,
) -> Result<PosteriorSamples> {
    let init = match init {
        Some(state) => state,
        None => initial_state(data, prior, draws, cfg)?,
    };
    let mut sampler = Sampler::new(data, draws, prior, cfg, init)?;
    let mut out = PosteriorSamples::empty(data.d_x(), data.d_rc(), data.product_counts(), sampler.kernel().clone());

    let burn = cfg.burn_in;
    let estimate_scale = cfg.calibrate && cfg.blocks.r && data.d_rc() > 0 && burn >= MIN_BURN_IN_FOR_SCALE;
    let (scale_from, scale_at) = (burn / 4, burn / 2);
    let mut r_history: Vec<Vec<f64>> = Vec::new();
    let mut window = BlockCounters::default();

    for it in 0..cfg.total_draws {
        sampler.sweep(&cfg.blocks)?;
        let counts = sampler.take_counters();
        if it < burn {
            out.burn_in_acceptance.merge(&counts);
            window.merge(&counts);
            if estimate_scale && it >= scale_from && it < scale_at {
                r_history.push(sampler.state().r.clone());
            }
            if estimate_scale && it + 1 == scale_at {
                if let Some(cov) = draw_covariance(&r_history) {
                    let kernel = sampler.kernel_mut();
                    kernel.s_r = cov;
                    kernel.kappa_r = 2.38 * 2.38 / data.d_rc() as f64;
                    sampler.diagnostics_mut().s_r_estimated = true;
                }
                r_history = Vec::new();
            }
            if cfg.calibrate && (it + 1) % cfg.adapt_window == 0 {
                let records = adapt_window(sampler.kernel_mut(), &window, cfg.target_accept, it);
                out.calibration.extend(records);
                window = BlockCounters::default();
            }
            if it + 1 == burn {
                out.kernel = sampler.kernel().clone();
            }
        } else {
            out.acceptance.merge(&counts);
            if (it - burn + 1) % cfg.thin == 0 {
                out.push(sampler.state());
                if cfg.learn_slab_variance.is_some() {
                    out.tau1_sq.push(sampler.prior().tau1_sq);
                }
            }
        }
    }
    out.kernel = sampler.kernel().clone();
    out.diagnostics = *sampler.diagnostics();
    Ok(out)
}

/// Spike and slab variances suggested from a pilot chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauSuggestion {
    /// Posterior mean of the common deviation variance with every product in the slab.
    pub tau_hat_sq: f64,
    pub tau0_sq: f64,
    pub tau1_sq: f64,
}

/// Pilot run that puts every `eta_jt` in the slab, learns the slab variance
/// under an inverse-gamma prior, and suggests `tau0_sq = tau_hat^2 / 100`,
/// `tau1_sq = 10 tau_hat^2`.
pub fn suggest_tau(
    data: &Dataset,
    prior: &PriorConfig,
    cfg: &McmcConfig,
    hyper: SlabVariancePrior,
) -> Result<TauSuggestion> {
    let mut pilot = cfg.clone();
    pilot.blocks = Blocks {
        gamma: false,
        phi: false,
        ..cfg.blocks
    };
    pilot.learn_slab_variance = Some(hyper);
    let draws = fit_nodes(data, &pilot)?;
    let mut init = initial_state(data, prior, &draws, &pilot)?;
    for g in &mut init.gamma {
        g.iter_mut().for_each(|v| *v = true);
    }
    let samples = run_chain_with(data, prior, &pilot, &draws, Some(init))?;
    if samples.tau1_sq.is_empty() {
        return Err(Error::InvalidConfig("pilot chain retained no draws".into()));
    }
    let tau_hat_sq = samples.tau1_sq.iter().sum::<f64>() / samples.tau1_sq.len() as f64;
    Ok(TauSuggestion {
        tau_hat_sq,
        tau0_sq: 1e-2 * tau_hat_sq,
        tau1_sq: 10.0 * tau_hat_sq,
    })
}
