//! Synthetic data from the four simulation designs.
//!
//! Utility is `beta_p,i p_jt + beta_w w_jt + xi_jt + eps_ijt` with
//! `beta_p,i ~ N(beta_p, sigma^2)`, Gumbel `eps`, `w ~ U(1, 2)`,
//! `p = alpha + 0.3 w + u`, `u ~ N(0, 0.7^2)` and `xi_jt = xi_bar + eta_jt`.
//!
//! | design | `eta`                                   | `alpha`                     |
//! |--------|-----------------------------------------|-----------------------------|
//! | 1      | first 40% alternate `1, -1`, rest zero  | 0                           |
//! | 2      | as design 1                             | `0.3 * eta`                 |
//! | 3      | `N(0, 1/9)`                             | 0                           |
//! | 4      | `N(0, 1/9)`                             | `±0.3` where `|eta| >= 1/3` |

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gumbel, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{substream, Stream};
use crate::model::{shares_from_delta, Dataset, MarketData, RcDraws};
use crate::quadrature::gauss_hermite;

const QUADRATURE_NODES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub design: u8,
    pub products: usize,
    pub markets: usize,
    pub consumers: u64,
    pub seed: u64,
    pub replication: u64,
    /// Round expected shares instead of simulating individual choices.
    pub expected_counts: bool,
    pub beta_p: f64,
    pub beta_w: f64,
    pub sigma: f64,
    pub xi_bar: f64,
}

impl DgpConfig {
    pub fn new(design: u8, products: usize, markets: usize, seed: u64) -> Self {
        Self {
            design,
            products,
            markets,
            consumers: 1000,
            seed,
            replication: 0,
            expected_counts: false,
            beta_p: -1.0,
            beta_w: 0.5,
            sigma: 1.5,
            xi_bar: -1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.design) {
            return Err(Error::InvalidConfig(format!("design must be 1-4, got {}", self.design)));
        }
        if self.products == 0 || self.markets == 0 || self.consumers == 0 {
            return Err(Error::InvalidConfig("products, markets and consumers must be positive".into()));
        }
        let finite = [self.beta_p, self.beta_w, self.sigma, self.xi_bar].iter().all(|v| v.is_finite());
        if !finite || self.sigma < 0.0 {
            return Err(Error::InvalidConfig("structural parameters must be finite with sigma >= 0".into()));
        }
        Ok(())
    }
}

/// Parameters that generated a dataset. Kept apart from the data itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpTruth {
    pub design: u8,
    /// `(beta_p, beta_w)`, in characteristic order `(price, w)`.
    pub beta_bar: Vec<f64>,
    pub sigma: Vec<f64>,
    pub xi_bar: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub cost_shock: Vec<Vec<f64>>,
}

impl DgpTruth {
    pub fn r(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s.ln()).collect()
    }

    /// `xi_jt = xi_bar_t + eta_jt`.
    pub fn xi(&self, t: usize) -> Vec<f64> {
        self.eta[t].iter().map(|e| self.xi_bar[t] + e).collect()
    }
}

/// Planted deviations of the sparse designs: `round(0.4 J)` leading entries
/// alternating `1, -1`, zeros after.
pub fn sparse_eta(products: usize) -> Vec<f64> {
    let nonzero = (0.4 * products as f64).round() as usize;
    (0..products)
        .map(|j| match j {
            j if j >= nonzero => 0.0,
            j if j % 2 == 0 => 1.0,
            _ => -1.0,
        })
        .collect()
}

fn alpha_for(design: u8, eta: f64) -> f64 {
    match design {
        2 => 0.3 * eta.signum() * (eta != 0.0) as u8 as f64,
        4 if eta >= 1.0 / 3.0 => 0.3,
        4 if eta <= -1.0 / 3.0 => -0.3,
        _ => 0.0,
    }
}

struct MarketDraw {
    market: MarketData,
    eta: Vec<f64>,
    alpha: Vec<f64>,
    cost: Vec<f64>,
}

fn gen_market(cfg: &DgpConfig, t: usize, quadrature: &RcDraws) -> Result<MarketDraw> {
    let mut rng = substream(cfg.seed, cfg.replication, Stream::Dgp, t as u64);
    let j = cfg.products;
    let uniform = Uniform::new(1.0, 2.0).expect("valid bounds");
    let cost_dist = Normal::new(0.0, 0.7).expect("valid scale");
    let eta_dist = Normal::new(0.0, 1.0 / 3.0).expect("valid scale");
    let eta: Vec<f64> = match cfg.design {
        1 | 2 => sparse_eta(j),
        _ => (0..j).map(|_| eta_dist.sample(&mut rng)).collect(),
    };
    let w: Vec<f64> = (0..j).map(|_| uniform.sample(&mut rng)).collect();
    let cost: Vec<f64> = (0..j).map(|_| cost_dist.sample(&mut rng)).collect();
    let alpha: Vec<f64> = eta.iter().map(|&e| alpha_for(cfg.design, e)).collect();
    let price: Vec<f64> = (0..j).map(|k| alpha[k] + 0.3 * w[k] + cost[k]).collect();
    let x = DMatrix::from_fn(j, 2, |r, c| if c == 0 { price[r] } else { w[r] });
    let base: Vec<f64> = (0..j).map(|k| cfg.beta_w * w[k] + cfg.xi_bar + eta[k]).collect();

    let quantities = if cfg.expected_counts {
        let delta: Vec<f64> = (0..j).map(|k| base[k] + cfg.beta_p * price[k]).collect();
        let placeholder = MarketData::new(t.to_string(), vec![String::new(); j], 0, vec![0; j], x.clone())?;
        let shares = shares_from_delta(&placeholder, &[0], &[cfg.sigma], &delta, quadrature)?;
        let mut q: Vec<u64> = shares[1..].iter().map(|s| (s * cfg.consumers as f64).round() as u64).collect();
        while q.iter().sum::<u64>() > cfg.consumers {
            let largest = (0..j).max_by_key(|&k| q[k]).expect("at least one product");
            q[largest] -= 1;
        }
        q
    } else {
        let gumbel = Gumbel::new(0.0, 1.0).expect("valid scale");
        let mut q = vec![0u64; j];
        for _ in 0..cfg.consumers {
            let z: f64 = rng.sample(StandardNormal);
            let beta_p = cfg.beta_p + cfg.sigma * z;
            let mut best = gumbel.sample(&mut rng);
            let mut choice = None;
            for k in 0..j {
                let u = base[k] + beta_p * price[k] + gumbel.sample(&mut rng);
                if u > best {
                    best = u;
                    choice = Some(k);
                }
            }
            if let Some(k) = choice {
                q[k] += 1;
            }
        }
        q
    };

    let market = MarketData::new(
        (t + 1).to_string(),
        (1..=j).map(|k| k.to_string()).collect(),
        cfg.consumers,
        quantities,
        x,
    )?;
    Ok(MarketDraw {
        market,
        eta,
        alpha,
        cost,
    })
}

/// Generates one dataset with characteristics `(price, w)`, a random
/// coefficient on price only, and the truth that produced it.
pub fn gen_dataset(cfg: &DgpConfig) -> Result<(Dataset, DgpTruth)> {
    cfg.validate()?;
    let (nodes, weights) = gauss_hermite(QUADRATURE_NODES)?;
    let quadrature = RcDraws::weighted(DMatrix::from_column_slice(nodes.len(), 1, &nodes), weights)?;
    let draws: Vec<MarketDraw> = (0..cfg.markets)
        .into_par_iter()
        .map(|t| gen_market(cfg, t, &quadrature))
        .collect::<Result<_>>()?;
    let mut markets = Vec::with_capacity(cfg.markets);
    let mut truth = DgpTruth {
        design: cfg.design,
        beta_bar: vec![cfg.beta_p, cfg.beta_w],
        sigma: vec![cfg.sigma],
        xi_bar: vec![cfg.xi_bar; cfg.markets],
        eta: Vec::with_capacity(cfg.markets),
        alpha: Vec::with_capacity(cfg.markets),
        cost_shock: Vec::with_capacity(cfg.markets),
    };
    for d in draws {
        markets.push(d.market);
        truth.eta.push(d.eta);
        truth.alpha.push(d.alpha);
        truth.cost_shock.push(d.cost);
    }
    let data = Dataset::new(markets, vec!["price".into(), "w".into()], vec![true, false])?;
    Ok((data, truth))
}

/// Average posterior inclusion probability over products whose true
/// deviation is nonzero, and over those whose deviation is zero. A group
/// with no members is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityScore {
    pub nonzero: Option<f64>,
    pub zero: Option<f64>,
}

pub fn score_sparsity(gamma_mean: &[Vec<f64>], eta_true: &[Vec<f64>]) -> Result<SparsityScore> {
    if gamma_mean.len() != eta_true.len() {
        return Err(Error::InvalidData(format!(
            "{} markets of inclusion probabilities for {} markets of truth",
            gamma_mean.len(),
            eta_true.len()
        )));
    }
    let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    for (t, (g, e)) in gamma_mean.iter().zip(eta_true).enumerate() {
        if g.len() != e.len() {
            return Err(Error::dim(&(t + 1).to_string(), "inclusion probabilities", e.len(), g.len()));
        }
        for (&p, &eta) in g.iter().zip(e) {
            if eta != 0.0 {
                on += p;
                n_on += 1;
            } else {
                off += p;
                n_off += 1;
            }
        }
    }
    Ok(SparsityScore {
        nonzero: (n_on > 0).then(|| on / n_on as f64),
        zero: (n_off > 0).then(|| off / n_off as f64),
    })
}
