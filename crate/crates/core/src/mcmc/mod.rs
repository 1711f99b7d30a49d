//! Posterior sampling: Gibbs blocks for the sparsity layer, tailored
//! Metropolis-Hastings for `beta_bar` and `eta`, random-walk Metropolis for
//! `xi_bar` and `r`.

mod calibrate;
mod chain;
mod config;
mod newton;
mod rng;
mod sampler;
mod samples;
mod steps;
mod summary;

pub use calibrate::{adapt_kappa, GROW, SHRINK};
pub use chain::{fit_nodes, initial_state, run_chain, run_chain_with, suggest_tau, TauSuggestion};
pub use config::{Blocks, McmcConfig, SlabVariancePrior};
pub use newton::{newton_mode, NewtonMode, NewtonOptions, SmoothObjective};
pub use sampler::Sampler;
pub use samples::{
    Block, BlockCounters, CalibrationRecord, Counter, Diagnostics, KernelParams, PosteriorSamples,
};
pub use steps::{rwmh_step, tmh_step, TmhOutcome};
pub use summary::{summarize, ParameterSummary, PosteriorSummary};

pub(crate) use rng::{substream, Stream};
