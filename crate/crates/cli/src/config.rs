//! Run configuration read from a sectioned TOML file.
//!
//! ```toml
//! data = "market.csv"
//!
//! [model]
//! price = "price"
//! random_coefficients = ["price"]
//! rc_nodes = 200
//!
//! [prior]
//! v_beta = 10.0          # scalar, or one value per characteristic
//! tau0_sq = 1e-3
//!
//! [mcmc]
//! total_draws = 5000
//! burn_in = 2000
//! fixed_blocks = ["r"]
//! ```
//!
//! Every key is optional. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_demand::mcmc::{Blocks, McmcConfig, SlabVariancePrior};
use sparse_demand::{Dataset, PriorConfig};

use crate::error::{CliError, Result};

/// A scalar applied to every coordinate, or one value per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCoordinate {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerCoordinate {
    fn expand(&self, what: &str, n: usize) -> Result<Vec<f64>> {
        match self {
            PerCoordinate::Scalar(v) => Ok(vec![*v; n]),
            PerCoordinate::List(v) if v.len() == n => Ok(v.clone()),
            PerCoordinate::List(v) => Err(CliError::Input(format!(
                "prior.{what} has {} entries, expected {n}",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub price: Option<String>,
    /// Characteristics with random coefficients; defaults to the price column.
    pub random_coefficients: Option<Vec<String>>,
    /// Integration nodes `R0`.
    pub rc_nodes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub mu_beta: Option<PerCoordinate>,
    pub v_beta: Option<PerCoordinate>,
    pub mu_xi: Option<f64>,
    pub v_xi: Option<f64>,
    pub v_r: Option<PerCoordinate>,
    pub tau0_sq: Option<f64>,
    pub tau1_sq: Option<f64>,
    pub a_phi: Option<f64>,
    pub b_phi: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    pub total_draws: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub kappa_beta: Option<f64>,
    pub kappa_eta: Option<f64>,
    pub kappa_xi: Option<f64>,
    pub kappa_r: Option<f64>,
    pub calibrate: Option<bool>,
    pub target_accept: Option<[f64; 2]>,
    pub adapt_window: Option<usize>,
    pub newton_max_iter: Option<usize>,
    pub newton_grad_tol: Option<f64>,
    /// Blocks held at their initial values: any of
    /// `beta_bar`, `r`, `xi_bar`, `eta`, `gamma`, `phi`.
    pub fixed_blocks: Option<Vec<String>>,
    /// Learn the slab variance under this inverse-gamma prior.
    pub slab_variance: Option<SlabVariancePrior>,
}

/// Overrides for `simulate`; command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub design: Option<u8>,
    pub products: Option<usize>,
    pub markets: Option<usize>,
    pub consumers: Option<u64>,
    pub replication: Option<u64>,
    pub expected_counts: Option<bool>,
    pub beta_p: Option<f64>,
    pub beta_w: Option<f64>,
    pub sigma: Option<f64>,
    pub xi_bar: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

/// Everything a fit needs once the dataset header is known.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedFit {
    pub price: String,
    pub price_col: usize,
    pub random_coefficients: Vec<String>,
    pub prior: PriorConfig,
    pub mcmc: McmcConfig,
}

pub const DEFAULT_PRICE: &str = "price";

impl FitConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: FitConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        // Relative data paths are taken relative to the config file.
        if let (Some(data), Some(dir)) = (&cfg.data, path.parent()) {
            if data.is_relative() {
                cfg.data = Some(dir.join(data));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn price(&self) -> String {
        self.model.price.clone().unwrap_or_else(|| DEFAULT_PRICE.to_string())
    }

    pub fn random_coefficients(&self) -> Vec<String> {
        self.model.random_coefficients.clone().unwrap_or_else(|| vec![self.price()])
    }

    /// Checks column references against `data` and fills in defaults.
    pub fn resolve(&self, data: &Dataset) -> Result<ResolvedFit> {
        let names = data.characteristic_names();
        let price = self.price();
        let price_col = names
            .iter()
            .position(|n| *n == price)
            .ok_or_else(|| CliError::Input(format!("price column '{price}' is not in the dataset")))?;
        let rc = self.random_coefficients();
        let expected: Vec<String> = data.rc_columns().iter().map(|&k| names[k].clone()).collect();
        let mut sorted = rc.clone();
        sorted.sort_by_key(|n| names.iter().position(|m| m == n));
        if sorted != expected {
            return Err(CliError::Input(format!(
                "dataset was loaded with random coefficients {expected:?}, configuration names {rc:?}"
            )));
        }
        let (d_x, d_rc) = (data.d_x(), data.d_rc());

        let mut prior = PriorConfig::defaults(d_x, d_rc);
        let p = &self.prior;
        if let Some(v) = &p.mu_beta {
            prior.mu_beta = v.expand("mu_beta", d_x)?;
        }
        if let Some(v) = &p.v_beta {
            prior.v_beta = v.expand("v_beta", d_x)?;
        }
        if let Some(v) = &p.v_r {
            prior.v_r = v.expand("v_r", d_rc)?;
        }
        prior.mu_xi = p.mu_xi.unwrap_or(prior.mu_xi);
        prior.v_xi = p.v_xi.unwrap_or(prior.v_xi);
        prior.tau0_sq = p.tau0_sq.unwrap_or(prior.tau0_sq);
        prior.tau1_sq = p.tau1_sq.unwrap_or(prior.tau1_sq);
        prior.a_phi = p.a_phi.unwrap_or(prior.a_phi);
        prior.b_phi = p.b_phi.unwrap_or(prior.b_phi);
        prior.validate(d_x, d_rc)?;

        let m = &self.mcmc;
        let base = McmcConfig::default();
        let mut mcmc = McmcConfig {
            total_draws: m.total_draws.unwrap_or(base.total_draws),
            burn_in: m.burn_in.unwrap_or(base.burn_in),
            thin: m.thin.unwrap_or(base.thin),
            seed: m.seed.unwrap_or(base.seed),
            rc_nodes: self.model.rc_nodes.unwrap_or(base.rc_nodes),
            kappa_beta: m.kappa_beta.or(base.kappa_beta),
            kappa_eta: m.kappa_eta.or(base.kappa_eta),
            kappa_xi: m.kappa_xi.unwrap_or(base.kappa_xi),
            kappa_r: m.kappa_r.unwrap_or(base.kappa_r),
            calibrate: m.calibrate.unwrap_or(base.calibrate),
            target_accept: m.target_accept.map(|[a, b]| (a, b)).unwrap_or(base.target_accept),
            adapt_window: m.adapt_window.unwrap_or(base.adapt_window),
            newton_max_iter: m.newton_max_iter.unwrap_or(base.newton_max_iter),
            newton_grad_tol: m.newton_grad_tol.unwrap_or(base.newton_grad_tol),
            learn_slab_variance: m.slab_variance,
            ..base
        };
        mcmc.blocks = fixed_blocks(m.fixed_blocks.as_deref().unwrap_or(&[]))?;
        mcmc.validate()?;
        Ok(ResolvedFit {
            price,
            price_col,
            random_coefficients: expected,
            prior,
            mcmc,
        })
    }
}

fn fixed_blocks(names: &[String]) -> Result<Blocks> {
    let mut blocks = Blocks::default();
    for name in names {
        let slot = match name.as_str() {
            "beta_bar" => &mut blocks.beta,
            "r" => &mut blocks.r,
            "xi_bar" => &mut blocks.xi_bar,
            "eta" => &mut blocks.eta,
            "gamma" => &mut blocks.gamma,
            "phi" => &mut blocks.phi,
            other => return Err(CliError::Input(format!("mcmc.fixed_blocks: unknown block '{other}'"))),
        };
        *slot = false;
    }
    Ok(blocks)
}
