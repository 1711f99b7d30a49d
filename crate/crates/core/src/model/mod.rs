//! Data model and deterministic evaluations of the random-coefficients logit:
//! mean utilities, simulated shares, the multinomial log-likelihood, and its
//! derivatives in the blocks the samplers need.

mod data;
mod derivatives;
mod shares;

pub use data::{Dataset, MarketData, MarketParams, ParamState, RcDraws};
pub use derivatives::{grad_hessian_beta, grad_hessian_eta, Derivatives};
pub use shares::{
    compute_delta, log_likelihood, market_log_likelihood, shares_from_delta, simulate_shares,
};

pub(crate) use derivatives::{beta_terms, eta_prior_terms, eta_terms};
pub(crate) use shares::{delta_unchecked, ChoiceProbs, NodeOffsets};
