//! Analytic score and Hessian of the simulated log-likelihood.
//!
//! For a parameter `theta` with `du_ij/dtheta = a_ij` (outside good fixed at
//! zero), node probabilities satisfy `ds_ij/dtheta = s_ij (a_ij - abar_i)` with
//! `abar_i = sum_k s_ik a_ik`. The second derivative of `s_ij` along
//! `(theta, phi)` is `s_ij [(a_ij - abar_i)(b_ij - bbar_i) - cov_i(a, b)]`.
//! Both blocks below (slopes and per-market deviations) have constant `a`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::data::{Dataset, MarketData, MarketParams, ParamState, RcDraws};
use super::shares::{prepare, ChoiceProbs, NodeOffsets};
use crate::error::{Error, Result};
use crate::priors::{log_prior_beta, log_prior_eta, PriorConfig};

/// Value, gradient and Hessian of an objective at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Derivatives {
    pub(crate) fn zeros(dim: usize) -> Self {
        Self {
            value: 0.0,
            gradient: DVector::zeros(dim),
            hessian: DMatrix::zeros(dim, dim),
        }
    }

    pub(crate) fn accumulate(&mut self, other: &Derivatives) {
        self.value += other.value;
        self.gradient += &other.gradient;
        self.hessian += &other.hessian;
    }
}

/// `q_j / sigma_j` with outside good first; zero counts give zero weight.
fn count_weights(market: &MarketData, probs: &ChoiceProbs) -> (Vec<f64>, Vec<f64>) {
    let width = market.products() + 1;
    let mut w = vec![0.0; width];
    let mut v = vec![0.0; width];
    let counts = std::iter::once(market.outside_quantity()).chain(market.quantities().iter().copied());
    for (j, q) in counts.enumerate() {
        if q > 0 {
            let q = q as f64;
            w[j] = q / probs.shares[j];
            v[j] = q / (probs.shares[j] * probs.shares[j]);
        }
    }
    (w, v)
}

/// Likelihood derivatives of one market with respect to `beta_bar`.
///
/// With `a_j = X_j` (and `a_0 = 0` for the outside good), node `i`
/// contributes `d s_ij = s_ij (a_j - abar_i)` and a second-order term
/// `sum_j (w_j - W_i) s_ij (a_j - abar_i)(a_j - abar_i)'`, where `w_j = q_j / sigma_j`
/// and `W_i = sum_j w_j s_ij`.
pub(crate) fn beta_terms(market: &MarketData, delta: &[f64], offsets: &NodeOffsets) -> Derivatives {
    let probs = ChoiceProbs::new(delta, offsets);
    let x = market.x();
    let j = market.products();
    let dim = x.ncols();
    let width = j + 1;
    let (w, v) = count_weights(market, &probs);
    // Row-major characteristics with a zero row for the outside good.
    let mut a = vec![0.0; width * dim];
    for p in 0..j {
        for k in 0..dim {
            a[(p + 1) * dim + k] = x[(p, k)];
        }
    }

    let mut dsig = vec![0.0; width * dim];
    let mut curv = vec![0.0; dim * dim];
    let mut abar = vec![0.0; dim];
    let mut c = vec![0.0; dim];
    for i in 0..offsets.nodes() {
        let s = probs.node(i);
        let weight = offsets.weights[i];
        abar.iter_mut().for_each(|v| *v = 0.0);
        let mut big_w = 0.0;
        for jj in 0..width {
            let sj = s[jj];
            big_w += w[jj] * sj;
            let row = &a[jj * dim..(jj + 1) * dim];
            for k in 0..dim {
                abar[k] += sj * row[k];
            }
        }
        for jj in 0..width {
            let coef = weight * s[jj];
            let row = &a[jj * dim..(jj + 1) * dim];
            for k in 0..dim {
                c[k] = row[k] - abar[k];
            }
            let out = &mut dsig[jj * dim..(jj + 1) * dim];
            for k in 0..dim {
                out[k] += coef * c[k];
            }
            let second = coef * (w[jj] - big_w);
            if second != 0.0 {
                for k in 0..dim {
                    let ck = second * c[k];
                    let row = &mut curv[k * dim..k * dim + k + 1];
                    for l in 0..=k {
                        row[l] += ck * c[l];
                    }
                }
            }
        }
    }

    let mut gradient = DVector::zeros(dim);
    for jj in 0..width {
        for k in 0..dim {
            gradient[k] += w[jj] * dsig[jj * dim + k];
        }
    }
    let mut hessian = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        for l in 0..=k {
            let mut h = curv[k * dim + l];
            for jj in 0..width {
                h -= v[jj] * dsig[jj * dim + k] * dsig[jj * dim + l];
            }
            hessian[(k, l)] = h;
            hessian[(l, k)] = h;
        }
    }
    Derivatives {
        value: probs.log_likelihood(market),
        gradient,
        hessian,
    }
}

/// Likelihood derivatives of one market with respect to its own `eta_t`.
pub(crate) fn eta_terms(market: &MarketData, delta: &[f64], offsets: &NodeOffsets) -> Derivatives {
    let probs = ChoiceProbs::new(delta, offsets);
    let j = market.products();
    let width = j + 1;
    let (w, v) = count_weights(market, &probs);

    let mut grad = vec![0.0; j];
    // Lower triangle of the second-order term, row-major j x j.
    let mut h1 = vec![0.0; j * j];
    // cross[jj * j + k] = E_i[s_ij s_ik], jj over all goods, k over inside goods.
    let mut cross = vec![0.0; width * j];
    let mut g = vec![0.0; j];
    for i in 0..offsets.nodes() {
        let s = probs.node(i);
        let weight = offsets.weights[i];
        let big_w: f64 = s.iter().zip(&w).map(|(a, b)| a * b).sum();
        let inside = &s[1..];
        for k in 0..j {
            g[k] = w[k + 1] - big_w;
        }
        for k in 0..j {
            let sk = weight * inside[k];
            grad[k] += sk * g[k];
            let row = &mut h1[k * j..k * j + k + 1];
            row[k] += sk * g[k];
            for l in 0..=k {
                row[l] -= sk * inside[l] * (g[k] + g[l]);
            }
        }
        for jj in 0..width {
            if v[jj] == 0.0 {
                continue;
            }
            let sj = weight * s[jj];
            let row = &mut cross[jj * j..(jj + 1) * j];
            for k in 0..j {
                row[k] += sj * inside[k];
            }
        }
    }
    // d sigma_jj / d eta_k = 1[jj = k] sigma_k - E[s_jj s_k]
    let dsig = |jj: usize, k: usize| -> f64 {
        let own = if jj == k + 1 { probs.shares[k + 1] } else { 0.0 };
        own - cross[jj * j + k]
    };
    let mut hessian = DMatrix::zeros(j, j);
    for k in 0..j {
        for l in 0..=k {
            let mut h = h1[k * j + l];
            for jj in 0..width {
                if v[jj] != 0.0 {
                    h -= v[jj] * dsig(jj, k) * dsig(jj, l);
                }
            }
            hessian[(k, l)] = h;
            hessian[(l, k)] = h;
        }
    }
    Derivatives {
        value: probs.log_likelihood(market),
        gradient: DVector::from_vec(grad),
        hessian,
    }
}

fn add_gaussian_prior(d: &mut Derivatives, point: &[f64], means: &[f64], variances: &[f64]) {
    for k in 0..point.len() {
        d.gradient[k] -= (point[k] - means[k]) / variances[k];
        d.hessian[(k, k)] -= 1.0 / variances[k];
    }
}

/// Gradient and Hessian in `beta_bar` of the aggregate log-likelihood, plus the
/// log prior on `beta_bar` when `prior` is given. `value` carries the same terms.
pub fn grad_hessian_beta(
    data: &Dataset,
    params: &ParamState,
    draws: &RcDraws,
    prior: Option<&PriorConfig>,
) -> Result<Derivatives> {
    params.check_shape(data)?;
    let parts: Vec<Derivatives> = (0..data.market_count())
        .into_par_iter()
        .map(|t| {
            let (delta, offsets) = prepare(data.market(t), data.rc_columns(), params.market(t), draws)?;
            Ok(beta_terms(data.market(t), &delta, &offsets))
        })
        .collect::<Result<_>>()?;
    let mut total = Derivatives::zeros(data.d_x());
    for part in &parts {
        total.accumulate(part);
    }
    if let Some(cfg) = prior {
        total.value += log_prior_beta(&params.beta_bar, cfg);
        add_gaussian_prior(&mut total, &params.beta_bar, &cfg.mu_beta, &cfg.v_beta);
    }
    Ok(total)
}

/// Gradient and Hessian in `eta_t` of market `t`'s log-likelihood, plus the
/// spike/slab normal prior selected by `gamma` when `prior` is given.
pub fn grad_hessian_eta(
    market: &MarketData,
    rc_columns: &[usize],
    params: MarketParams,
    gamma: &[bool],
    draws: &RcDraws,
    prior: Option<&PriorConfig>,
) -> Result<Derivatives> {
    if gamma.len() != market.products() {
        return Err(Error::dim(market.id(), "gamma", market.products(), gamma.len()));
    }
    let (delta, offsets) = prepare(market, rc_columns, params, draws)?;
    let mut d = eta_terms(market, &delta, &offsets);
    if let Some(cfg) = prior {
        eta_prior_terms(&mut d, params.eta, gamma, cfg);
    }
    Ok(d)
}

pub(crate) fn eta_prior_terms(d: &mut Derivatives, eta: &[f64], gamma: &[bool], cfg: &PriorConfig) {
    d.value += log_prior_eta(eta, gamma, cfg);
    for (k, (&e, &g)) in eta.iter().zip(gamma).enumerate() {
        let var = cfg.eta_variance(g);
        d.gradient[k] -= e / var;
        d.hessian[(k, k)] -= 1.0 / var;
    }
}
