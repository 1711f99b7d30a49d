//! Estimation, simulation and inversion of aggregate random-coefficients logit
//! demand with sparse market-product demand shocks.
//!
//! Demand shocks are decomposed as `xi_jt = xi_bar_t + eta_jt` and the
//! deviations receive a spike-and-slab prior, so the posterior learns which
//! products share their market's common shock. The sampler needs neither
//! demand inversion nor instruments.

pub mod dgp;
pub mod elasticity;
pub mod error;
pub mod inversion;
pub mod mcmc;
pub mod model;
pub mod priors;
pub mod quadrature;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Dataset, MarketData, MarketParams, ParamState, RcDraws};
pub use priors::PriorConfig;
