use serde::{Deserialize, Serialize};

use super::samples::PosteriorSamples;
use crate::stats::{mean, quantile_sorted, std_dev};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub mean: f64,
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl ParameterSummary {
    /// Mean, standard deviation and equal-tailed 95% interval of `draws`.
    pub fn from_draws(draws: &[f64]) -> Self {
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        let sd = if draws.len() > 1 { std_dev(draws) } else { 0.0 };
        Self {
            mean: mean(draws),
            sd,
            ci_lo: quantile_sorted(&sorted, 0.025),
            ci_hi: quantile_sorted(&sorted, 0.975),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub beta_bar: Vec<ParameterSummary>,
    pub r: Vec<ParameterSummary>,
    pub sigma: Vec<ParameterSummary>,
    pub xi_bar: Vec<ParameterSummary>,
    /// Posterior inclusion probabilities, per market.
    pub gamma_mean: Vec<Vec<f64>>,
    pub eta_mean: Vec<Vec<f64>>,
    pub phi_mean: Vec<f64>,
}

/// Summaries of every block; `sigma = exp(r)` is summarized draw by draw.
///
/// # Panics
/// If `samples` holds no draws.
pub fn summarize(samples: &PosteriorSamples) -> PosteriorSummary {
    assert!(samples.draws > 0, "cannot summarize an empty chain");
    let t = samples.markets();
    PosteriorSummary {
        beta_bar: (0..samples.d_x).map(|k| ParameterSummary::from_draws(&samples.beta_column(k))).collect(),
        r: (0..samples.d_rc).map(|k| ParameterSummary::from_draws(&samples.r_column(k))).collect(),
        sigma: (0..samples.d_rc).map(|k| ParameterSummary::from_draws(&samples.sigma_column(k))).collect(),
        xi_bar: (0..t).map(|m| ParameterSummary::from_draws(&samples.xi_bar_column(m))).collect(),
        gamma_mean: (0..t)
            .map(|m| (0..samples.products[m]).map(|j| mean(&samples.gamma_column(m, j))).collect())
            .collect(),
        eta_mean: (0..t)
            .map(|m| (0..samples.products[m]).map(|j| mean(&samples.eta_column(m, j))).collect())
            .collect(),
        phi_mean: (0..t).map(|m| mean(&samples.phi_column(m))).collect(),
    }
}
