use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed aggregate choices and product characteristics for one market.
///
/// The outside good is never stored as a product row; its quantity is
/// inferred as `market_size - sum(quantities)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketData {
    id: String,
    product_ids: Vec<String>,
    market_size: u64,
    quantities: Vec<u64>,
    outside_quantity: u64,
    x: DMatrix<f64>,
}

impl MarketData {
    pub fn new(
        id: impl Into<String>,
        product_ids: Vec<String>,
        market_size: u64,
        quantities: Vec<u64>,
        x: DMatrix<f64>,
    ) -> Result<Self> {
        let id = id.into();
        let j = quantities.len();
        if j == 0 {
            return Err(Error::InvalidData(format!("market {id} has no products")));
        }
        if product_ids.len() != j {
            return Err(Error::dim(&id, "product ids", j, product_ids.len()));
        }
        if x.nrows() != j {
            return Err(Error::dim(&id, "characteristic rows", j, x.nrows()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("characteristics of market {id}")));
        }
        let inside: u64 = quantities.iter().sum();
        if inside > market_size {
            return Err(Error::InvalidData(format!(
                "market {id}: inside quantities sum to {inside}, exceeding market size {market_size}"
            )));
        }
        Ok(Self {
            id,
            product_ids,
            market_size,
            outside_quantity: market_size - inside,
            quantities,
            x,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn product_ids(&self) -> &[String] {
        &self.product_ids
    }

    /// Number of inside goods.
    pub fn products(&self) -> usize {
        self.quantities.len()
    }

    pub fn market_size(&self) -> u64 {
        self.market_size
    }

    pub fn quantities(&self) -> &[u64] {
        &self.quantities
    }

    pub fn outside_quantity(&self) -> u64 {
        self.outside_quantity
    }

    /// `J x d_X` characteristic matrix.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Observed shares of the inside goods, `q_j / N`.
    pub fn observed_shares(&self) -> Vec<f64> {
        let n = self.market_size as f64;
        self.quantities.iter().map(|&q| q as f64 / n).collect()
    }

    pub fn observed_outside_share(&self) -> f64 {
        self.outside_quantity as f64 / self.market_size as f64
    }

    /// Copy of this market with a different characteristic matrix.
    pub fn with_characteristics(&self, x: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.id.clone(),
            self.product_ids.clone(),
            self.market_size,
            self.quantities.clone(),
            x,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    markets: Vec<MarketData>,
    characteristic_names: Vec<String>,
    rc_mask: Vec<bool>,
    rc_columns: Vec<usize>,
}

impl Dataset {
    pub fn new(
        markets: Vec<MarketData>,
        characteristic_names: Vec<String>,
        rc_mask: Vec<bool>,
    ) -> Result<Self> {
        if markets.is_empty() {
            return Err(Error::InvalidData("dataset has no markets".into()));
        }
        let d_x = characteristic_names.len();
        if rc_mask.len() != d_x {
            return Err(Error::InvalidData(format!(
                "random-coefficient mask has length {}, expected {d_x}",
                rc_mask.len()
            )));
        }
        for market in &markets {
            if market.x.ncols() != d_x {
                return Err(Error::dim(&market.id, "characteristic columns", d_x, market.x.ncols()));
            }
        }
        let rc_columns = rc_mask
            .iter()
            .enumerate()
            .filter_map(|(k, &on)| on.then_some(k))
            .collect();
        Ok(Self {
            markets,
            characteristic_names,
            rc_mask,
            rc_columns,
        })
    }

    pub fn markets(&self) -> &[MarketData] {
        &self.markets
    }

    pub fn market(&self, t: usize) -> &MarketData {
        &self.markets[t]
    }

    pub fn market_count(&self) -> usize {
        self.markets.len()
    }

    pub fn characteristic_names(&self) -> &[String] {
        &self.characteristic_names
    }

    pub fn d_x(&self) -> usize {
        self.characteristic_names.len()
    }

    pub fn rc_mask(&self) -> &[bool] {
        &self.rc_mask
    }

    /// Indices of the characteristics that carry random coefficients.
    pub fn rc_columns(&self) -> &[usize] {
        &self.rc_columns
    }

    pub fn d_rc(&self) -> usize {
        self.rc_columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.characteristic_names.iter().position(|n| n == name)
    }

    /// Product counts per market.
    pub fn product_counts(&self) -> Vec<usize> {
        self.markets.iter().map(MarketData::products).collect()
    }

    pub fn total_products(&self) -> usize {
        self.markets.iter().map(MarketData::products).sum()
    }
}

/// Full parameter vector of the sampler.
///
/// `xi_jt` is always reconstructed as `xi_bar[t] + eta[t][j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub beta_bar: Vec<f64>,
    /// Log standard deviations of the random coefficients, one per RC column.
    pub r: Vec<f64>,
    pub xi_bar: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<bool>>,
    pub phi: Vec<f64>,
}

impl ParamState {
    /// Zero slopes and shocks, `r = ln(0.1)`, all indicators in the spike, `phi = 0.5`.
    pub fn zeros(data: &Dataset) -> Self {
        let counts = data.product_counts();
        Self {
            beta_bar: vec![0.0; data.d_x()],
            r: vec![0.1f64.ln(); data.d_rc()],
            xi_bar: vec![0.0; data.market_count()],
            eta: counts.iter().map(|&j| vec![0.0; j]).collect(),
            gamma: counts.iter().map(|&j| vec![false; j]).collect(),
            phi: vec![0.5; data.market_count()],
        }
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.r.iter().map(|r| r.exp()).collect()
    }

    pub fn xi(&self, t: usize) -> Vec<f64> {
        self.eta[t].iter().map(|e| self.xi_bar[t] + e).collect()
    }

    pub fn market(&self, t: usize) -> MarketParams<'_> {
        MarketParams {
            beta_bar: &self.beta_bar,
            r: &self.r,
            xi_bar: self.xi_bar[t],
            eta: &self.eta[t],
        }
    }

    /// Checks every block against the dataset layout.
    pub fn check_shape(&self, data: &Dataset) -> Result<()> {
        let t = data.market_count();
        let shape_err = |what: &str, expected: usize, found: usize| {
            Error::InvalidData(format!("parameter block {what} has length {found}, expected {expected}"))
        };
        if self.beta_bar.len() != data.d_x() {
            return Err(shape_err("beta_bar", data.d_x(), self.beta_bar.len()));
        }
        if self.r.len() != data.d_rc() {
            return Err(shape_err("r", data.d_rc(), self.r.len()));
        }
        for (name, len) in [
            ("xi_bar", self.xi_bar.len()),
            ("eta", self.eta.len()),
            ("gamma", self.gamma.len()),
            ("phi", self.phi.len()),
        ] {
            if len != t {
                return Err(shape_err(name, t, len));
            }
        }
        for (m, market) in data.markets().iter().enumerate() {
            if self.eta[m].len() != market.products() {
                return Err(Error::dim(market.id(), "eta", market.products(), self.eta[m].len()));
            }
            if self.gamma[m].len() != market.products() {
                return Err(Error::dim(market.id(), "gamma", market.products(), self.gamma[m].len()));
            }
        }
        Ok(())
    }
}

/// Borrowed view of the parameters relevant to a single market.
#[derive(Clone, Copy, Debug)]
pub struct MarketParams<'a> {
    pub beta_bar: &'a [f64],
    pub r: &'a [f64],
    pub xi_bar: f64,
    pub eta: &'a [f64],
}

/// Fixed standard-normal integration nodes, `R0 x d_rc`.
///
/// Drawn once per fit and reused at every evaluation. Monte Carlo nodes carry
/// equal weights; quadrature rules may supply their own.
#[derive(Clone, Debug, PartialEq)]
pub struct RcDraws {
    nodes: DMatrix<f64>,
    weights: Vec<f64>,
}

impl RcDraws {
    pub fn new(nodes: DMatrix<f64>) -> Result<Self> {
        let n = nodes.nrows();
        Self::weighted(nodes, vec![1.0 / n.max(1) as f64; n])
    }

    /// Nodes with explicit integration weights; weights are normalized to sum to one.
    pub fn weighted(nodes: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.nrows() == 0 {
            return Err(Error::InvalidConfig("at least one integration node is required".into()));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("integration nodes".into()));
        }
        if weights.len() != nodes.nrows() {
            return Err(Error::InvalidConfig(format!(
                "{} node weights for {} nodes",
                weights.len(),
                nodes.nrows()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidConfig("node weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { nodes, weights })
    }

    pub fn standard_normal<R: Rng + ?Sized>(count: usize, d_rc: usize, rng: &mut R) -> Result<Self> {
        let mut nodes = DMatrix::zeros(count, d_rc);
        for i in 0..count {
            for k in 0..d_rc {
                nodes[(i, k)] = rng.sample(StandardNormal);
            }
        }
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &DMatrix<f64> {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn count(&self) -> usize {
        self.nodes.nrows()
    }

    pub fn dim(&self) -> usize {
        self.nodes.ncols()
    }
}
