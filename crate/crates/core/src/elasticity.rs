//! Own- and cross-price elasticities, per parameter draw and over a posterior.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{ParameterSummary, PosteriorSamples};
use crate::model::{compute_delta, ChoiceProbs, Dataset, MarketData, MarketParams, NodeOffsets, ParamState, RcDraws};

/// Elasticity matrix `E[j, m] = d ln sigma_j / d ln p_m` for one market.
///
/// The price coefficient of node `i` is `beta_bar[price] + sigma_price v_i`,
/// with `sigma_price = 0` when price carries no random coefficient.
pub fn elasticity_matrix(
    market: &MarketData,
    rc_columns: &[usize],
    params: MarketParams,
    draws: &RcDraws,
    price_col: usize,
) -> Result<DMatrix<f64>> {
    let x = market.x();
    if price_col >= x.ncols() {
        return Err(Error::InvalidConfig(format!(
            "price column {price_col} out of range for {} characteristics",
            x.ncols()
        )));
    }
    if params.r.len() != rc_columns.len() {
        return Err(Error::dim(market.id(), "r", rc_columns.len(), params.r.len()));
    }
    if !rc_columns.is_empty() && draws.dim() != rc_columns.len() {
        return Err(Error::dim(market.id(), "integration node dimension", rc_columns.len(), draws.dim()));
    }
    let delta = compute_delta(market, params.beta_bar, params.xi_bar, params.eta)?;
    let sigma: Vec<f64> = params.r.iter().map(|r| r.exp()).collect();
    let offsets = NodeOffsets::new(market, rc_columns, &sigma, draws);
    let probs = ChoiceProbs::new(&delta, &offsets);
    let j = market.products();
    if let Some(k) = (1..=j).find(|&k| !(probs.shares[k] > 0.0)) {
        return Err(Error::InvalidData(format!(
            "market {}: share of product {} underflows, elasticities undefined",
            market.id(),
            k - 1
        )));
    }
    let rc_price = rc_columns.iter().position(|&c| c == price_col);
    let beta_price = params.beta_bar[price_col];
    let mut e = DMatrix::zeros(j, j);
    for i in 0..offsets.nodes() {
        let b = match rc_price {
            Some(k) if !rc_columns.is_empty() => beta_price + sigma[k] * draws.nodes()[(i, k)],
            _ => beta_price,
        };
        let w = offsets.weights[i] * b;
        let s = &probs.node(i)[1..];
        for a in 0..j {
            for m in 0..j {
                let d = if a == m { s[a] * (1.0 - s[a]) } else { -s[a] * s[m] };
                e[(a, m)] += w * d;
            }
        }
    }
    for a in 0..j {
        for m in 0..j {
            e[(a, m)] *= x[(m, price_col)] / probs.shares[a + 1];
        }
    }
    Ok(e)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElasticityRequest {
    /// Market indices; `None` selects every market.
    pub markets: Option<Vec<usize>>,
    /// `(j, m)` pairs; `None` selects the full matrix.
    pub pairs: Option<Vec<(usize, usize)>>,
    pub price_col: usize,
    /// Retained draws to use; `None` uses all of them.
    pub draws: Option<Range<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticityEntry {
    pub market: usize,
    pub j: usize,
    pub m: usize,
    /// Posterior summary of the elasticity.
    pub posterior: ParameterSummary,
    /// Elasticity evaluated at the posterior-mean parameters.
    pub at_posterior_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorElasticity {
    pub entries: Vec<ElasticityEntry>,
    /// Average over own-price entries of the posterior means.
    pub own_mean: f64,
    /// Average over own-price entries of the posterior standard deviations.
    pub own_sd: f64,
    pub draws_used: usize,
}

fn mean_state(samples: &PosteriorSamples, range: Range<usize>) -> ParamState {
    let n = range.len() as f64;
    let mut acc = samples.state(range.start);
    let scale = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = 0.0);
    scale(&mut acc.beta_bar);
    scale(&mut acc.r);
    scale(&mut acc.xi_bar);
    acc.eta.iter_mut().for_each(scale);
    for g in range {
        let s = samples.state(g);
        let add = |a: &mut Vec<f64>, b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y / n);
        add(&mut acc.beta_bar, &s.beta_bar);
        add(&mut acc.r, &s.r);
        add(&mut acc.xi_bar, &s.xi_bar);
        for (a, b) in acc.eta.iter_mut().zip(&s.eta) {
            add(a, b);
        }
    }
    acc
}

/// Elasticities at every requested draw, summarized per `(market, j, m)`,
/// alongside the elasticity at the posterior-mean parameters.
pub fn posterior_elasticity(
    samples: &PosteriorSamples,
    data: &Dataset,
    draws: &RcDraws,
    request: &ElasticityRequest,
) -> Result<PosteriorElasticity> {
    let range = request.draws.clone().unwrap_or(0..samples.draws);
    if range.is_empty() || range.end > samples.draws {
        return Err(Error::InvalidConfig(format!(
            "draw range {range:?} is empty or exceeds the {} retained draws",
            samples.draws
        )));
    }
    let markets = request.markets.clone().unwrap_or_else(|| (0..data.market_count()).collect());
    if let Some(&bad) = markets.iter().find(|&&t| t >= data.market_count()) {
        return Err(Error::InvalidConfig(format!("market index {bad} out of range")));
    }
    let pairs_for = |t: usize| -> Result<Vec<(usize, usize)>> {
        let j = data.market(t).products();
        match &request.pairs {
            Some(p) => {
                if let Some(&(a, b)) = p.iter().find(|(a, b)| *a >= j || *b >= j) {
                    return Err(Error::InvalidConfig(format!(
                        "product pair ({a}, {b}) out of range in market {}",
                        data.market(t).id()
                    )));
                }
                Ok(p.clone())
            }
            None => Ok((0..j).flat_map(|a| (0..j).map(move |b| (a, b))).collect()),
        }
    };
    let center = mean_state(samples, range.clone());
    let mut entries = Vec::new();
    for &t in &markets {
        let pairs = pairs_for(t)?;
        let market = data.market(t);
        let per_draw: Vec<DMatrix<f64>> = range
            .clone()
            .into_par_iter()
            .map(|g| {
                let s = samples.state(g);
                elasticity_matrix(market, data.rc_columns(), s.market(t), draws, request.price_col)
            })
            .collect::<Result<_>>()?;
        let at_mean = elasticity_matrix(market, data.rc_columns(), center.market(t), draws, request.price_col)?;
        for (a, b) in pairs {
            let values: Vec<f64> = per_draw.iter().map(|e| e[(a, b)]).collect();
            entries.push(ElasticityEntry {
                market: t,
                j: a,
                m: b,
                posterior: ParameterSummary::from_draws(&values),
                at_posterior_mean: at_mean[(a, b)],
            });
        }
    }
    let own: Vec<&ElasticityEntry> = entries.iter().filter(|e| e.j == e.m).collect();
    let n_own = own.len().max(1) as f64;
    Ok(PosteriorElasticity {
        own_mean: own.iter().map(|e| e.posterior.mean).sum::<f64>() / n_own,
        own_sd: own.iter().map(|e| e.posterior.sd).sum::<f64>() / n_own,
        entries,
        draws_used: range.len(),
    })
}
