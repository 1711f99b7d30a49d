use nalgebra::DMatrix;
use rayon::prelude::*;

use super::data::{Dataset, MarketData, MarketParams, ParamState, RcDraws};
use crate::error::{Error, Result};

/// Below this a share is recomputed in log space rather than logged directly.
const LOG_FALLBACK: f64 = 1e-280;
/// Utilities below this are exponentiated without a max shift.
const EXP_SAFE: f64 = 600.0;

/// Mean utilities `delta_j = X_j . beta_bar + xi_bar + eta_j` for one market.
pub fn compute_delta(
    market: &MarketData,
    beta_bar: &[f64],
    xi_bar: f64,
    eta: &[f64],
) -> Result<Vec<f64>> {
    let x = market.x();
    if beta_bar.len() != x.ncols() {
        return Err(Error::dim(market.id(), "beta_bar", x.ncols(), beta_bar.len()));
    }
    if eta.len() != market.products() {
        return Err(Error::dim(market.id(), "eta", market.products(), eta.len()));
    }
    Ok(delta_unchecked(x, beta_bar, xi_bar, eta))
}

pub(crate) fn delta_unchecked(x: &DMatrix<f64>, beta_bar: &[f64], xi_bar: f64, eta: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|j| {
            let mut d = xi_bar + eta[j];
            for (k, b) in beta_bar.iter().enumerate() {
                d += x[(j, k)] * b;
            }
            d
        })
        .collect()
}

/// Random-coefficient utility offsets `mu_ij = X_j[rc] . (sigma * v_i)` for one
/// market, stored node-major. Without random coefficients a single zero node
/// with unit weight stands in for the whole rule.
#[derive(Clone, Debug)]
pub(crate) struct NodeOffsets {
    pub(crate) weights: Vec<f64>,
    pub(crate) products: usize,
    pub(crate) values: Vec<f64>,
    /// `exp(values)`, present when no offset is large enough to overflow.
    exp_values: Option<Vec<f64>>,
    max_value: f64,
}

impl NodeOffsets {
    pub(crate) fn new(market: &MarketData, rc_columns: &[usize], sigma: &[f64], draws: &RcDraws) -> Self {
        let j = market.products();
        if rc_columns.is_empty() {
            return Self::from_values(vec![1.0], j, vec![0.0; j]);
        }
        let nodes = draws.nodes();
        let x = market.x();
        let n = draws.count();
        let mut values = vec![0.0; n * j];
        for i in 0..n {
            let row = &mut values[i * j..(i + 1) * j];
            for (k, &col) in rc_columns.iter().enumerate() {
                let scale = sigma[k] * nodes[(i, k)];
                for (p, v) in row.iter_mut().enumerate() {
                    *v += x[(p, col)] * scale;
                }
            }
        }
        Self::from_values(draws.weights().to_vec(), j, values)
    }

    fn from_values(weights: Vec<f64>, products: usize, values: Vec<f64>) -> Self {
        let max_value = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp_values = (max_value < EXP_SAFE).then(|| values.iter().map(|v| v.exp()).collect());
        Self {
            weights,
            products,
            values,
            exp_values,
            max_value,
        }
    }

    pub(crate) fn nodes(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.products..(i + 1) * self.products]
    }
}

/// Per-node choice probabilities and their integrated shares. Column 0 is the
/// outside good.
#[derive(Clone, Debug)]
pub(crate) struct ChoiceProbs {
    pub(crate) width: usize,
    pub(crate) probs: Vec<f64>,
    pub(crate) shares: Vec<f64>,
    pub(crate) log_shares: Vec<f64>,
}

impl ChoiceProbs {
    pub(crate) fn new(delta: &[f64], offsets: &NodeOffsets) -> Self {
        let j = offsets.products;
        let width = j + 1;
        let n = offsets.nodes();
        let mut probs = vec![0.0; n * width];
        let mut lse = vec![0.0; n];
        let mut shares = vec![0.0; width];
        let delta_max = delta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // In the unshifted branch `lse` holds the normalizers themselves.
        let unshifted = matches!(&offsets.exp_values, Some(_) if delta_max < EXP_SAFE && delta_max + offsets.max_value < EXP_SAFE);
        match &offsets.exp_values {
            Some(exp_mu) if delta_max < EXP_SAFE && delta_max + offsets.max_value < EXP_SAFE => {
                let exp_delta: Vec<f64> = delta.iter().map(|d| d.exp()).collect();
                for i in 0..n {
                    let mu = &exp_mu[i * j..(i + 1) * j];
                    let row = &mut probs[i * width..(i + 1) * width];
                    row[0] = 1.0;
                    let mut total = 1.0;
                    for p in 0..j {
                        row[p + 1] = exp_delta[p] * mu[p];
                        total += row[p + 1];
                    }
                    lse[i] = total;
                    let inv = 1.0 / total;
                    let w = offsets.weights[i];
                    for (s, v) in shares.iter_mut().zip(row.iter_mut()) {
                        *v *= inv;
                        *s += w * *v;
                    }
                }
            }
            _ => {
                let mut utility = vec![0.0; j];
                for i in 0..n {
                    let mu = offsets.row(i);
                    let mut m = 0.0f64;
                    for p in 0..j {
                        utility[p] = delta[p] + mu[p];
                        m = m.max(utility[p]);
                    }
                    let row = &mut probs[i * width..(i + 1) * width];
                    row[0] = (-m).exp();
                    let mut total = row[0];
                    for p in 0..j {
                        row[p + 1] = (utility[p] - m).exp();
                        total += row[p + 1];
                    }
                    lse[i] = m + total.ln();
                    let w = offsets.weights[i];
                    for (s, v) in shares.iter_mut().zip(row.iter_mut()) {
                        *v /= total;
                        *s += w * *v;
                    }
                }
            }
        }
        let mut log_shares: Vec<f64> = shares.iter().map(|s| s.ln()).collect();
        for (p, ls) in log_shares.iter_mut().enumerate() {
            if shares[p] < LOG_FALLBACK {
                *ls = log_mean_exp(offsets, |i| {
                    let u = if p == 0 { 0.0 } else { delta[p - 1] + offsets.row(i)[p - 1] };
                    u - if unshifted { lse[i].ln() } else { lse[i] }
                });
            }
        }
        Self {
            width,
            probs,
            shares,
            log_shares,
        }
    }

    pub(crate) fn node(&self, i: usize) -> &[f64] {
        &self.probs[i * self.width..(i + 1) * self.width]
    }

    /// `sum_j q_j log sigma_j` over inside and outside goods; zero counts drop out.
    pub(crate) fn log_likelihood(&self, market: &MarketData) -> f64 {
        let mut ll = 0.0;
        let q0 = market.outside_quantity();
        if q0 > 0 {
            ll += q0 as f64 * self.log_shares[0];
        }
        for (p, &q) in market.quantities().iter().enumerate() {
            if q > 0 {
                ll += q as f64 * self.log_shares[p + 1];
            }
        }
        ll
    }
}

fn log_mean_exp(offsets: &NodeOffsets, term: impl Fn(usize) -> f64) -> f64 {
    let n = offsets.nodes();
    let terms: Vec<f64> = (0..n).map(|i| offsets.weights[i].ln() + term(i)).collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn check_market_inputs(market: &MarketData, rc_columns: &[usize], p: &MarketParams, draws: &RcDraws) -> Result<()> {
    if p.r.len() != rc_columns.len() {
        return Err(Error::dim(market.id(), "r", rc_columns.len(), p.r.len()));
    }
    if !rc_columns.is_empty() && draws.dim() != rc_columns.len() {
        return Err(Error::dim(market.id(), "integration node dimension", rc_columns.len(), draws.dim()));
    }
    let finite = p.beta_bar.iter().chain(p.r).chain(p.eta).all(|v| v.is_finite()) && p.xi_bar.is_finite();
    if !finite {
        return Err(Error::NonFinite(format!("parameters of market {}", market.id())));
    }
    Ok(())
}

pub(crate) fn prepare(
    market: &MarketData,
    rc_columns: &[usize],
    p: MarketParams,
    draws: &RcDraws,
) -> Result<(Vec<f64>, NodeOffsets)> {
    check_market_inputs(market, rc_columns, &p, draws)?;
    let delta = compute_delta(market, p.beta_bar, p.xi_bar, p.eta)?;
    let sigma: Vec<f64> = p.r.iter().map(|r| r.exp()).collect();
    Ok((delta, NodeOffsets::new(market, rc_columns, &sigma, draws)))
}

/// Simulated market shares `(sigma_0, sigma_1, ..., sigma_J)`, outside good first.
pub fn simulate_shares(
    market: &MarketData,
    rc_columns: &[usize],
    params: MarketParams,
    draws: &RcDraws,
) -> Result<Vec<f64>> {
    let (delta, offsets) = prepare(market, rc_columns, params, draws)?;
    Ok(ChoiceProbs::new(&delta, &offsets).shares)
}

/// Shares from mean utilities directly (the `xi`-free entry point used by inversion).
pub fn shares_from_delta(
    market: &MarketData,
    rc_columns: &[usize],
    sigma: &[f64],
    delta: &[f64],
    draws: &RcDraws,
) -> Result<Vec<f64>> {
    if delta.len() != market.products() {
        return Err(Error::dim(market.id(), "delta", market.products(), delta.len()));
    }
    if delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite(format!("mean utilities of market {}", market.id())));
    }
    let offsets = NodeOffsets::new(market, rc_columns, sigma, draws);
    Ok(ChoiceProbs::new(delta, &offsets).shares)
}

/// Log-likelihood contribution of one market.
pub fn market_log_likelihood(
    market: &MarketData,
    rc_columns: &[usize],
    params: MarketParams,
    draws: &RcDraws,
) -> Result<f64> {
    let (delta, offsets) = prepare(market, rc_columns, params, draws)?;
    Ok(ChoiceProbs::new(&delta, &offsets).log_likelihood(market))
}

/// Aggregate multinomial log-likelihood `sum_t sum_j q_jt log sigma_jt`.
///
/// Markets are evaluated in parallel and reduced in market order.
pub fn log_likelihood(data: &Dataset, params: &ParamState, draws: &RcDraws) -> Result<f64> {
    params.check_shape(data)?;
    let parts: Vec<f64> = (0..data.market_count())
        .into_par_iter()
        .map(|t| market_log_likelihood(data.market(t), data.rc_columns(), params.market(t), draws))
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}
