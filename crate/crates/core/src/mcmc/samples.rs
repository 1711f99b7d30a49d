use serde::{Deserialize, Serialize};

use crate::model::ParamState;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn add(&mut self, proposed: u64, accepted: u64) {
        self.proposed += proposed;
        self.accepted += accepted;
    }

    /// Acceptance rate; zero when nothing was proposed.
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Acceptance counters of the Metropolis blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCounters {
    pub beta: Counter,
    pub r: Counter,
    pub xi_bar: Counter,
    pub eta: Counter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Beta,
    R,
    XiBar,
    Eta,
}

impl Block {
    pub const METROPOLIS: [Block; 4] = [Block::Beta, Block::R, Block::XiBar, Block::Eta];

    pub fn name(self) -> &'static str {
        match self {
            Block::Beta => "beta_bar",
            Block::R => "r",
            Block::XiBar => "xi_bar",
            Block::Eta => "eta",
        }
    }
}

impl BlockCounters {
    pub fn get(&self, block: Block) -> &Counter {
        match block {
            Block::Beta => &self.beta,
            Block::R => &self.r,
            Block::XiBar => &self.xi_bar,
            Block::Eta => &self.eta,
        }
    }

    pub fn get_mut(&mut self, block: Block) -> &mut Counter {
        match block {
            Block::Beta => &mut self.beta,
            Block::R => &mut self.r,
            Block::XiBar => &mut self.xi_bar,
            Block::Eta => &mut self.eta,
        }
    }

    pub fn merge(&mut self, other: &BlockCounters) {
        for b in Block::METROPOLIS {
            let o = *other.get(b);
            self.get_mut(b).add(o.proposed, o.accepted);
        }
    }
}

/// Proposal scales of the Metropolis blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub kappa_beta: f64,
    /// One scale per market.
    pub kappa_eta: Vec<f64>,
    pub kappa_xi: f64,
    pub kappa_r: f64,
    /// Random-walk scale matrix for `r`, row-major `d_rc x d_rc`.
    pub s_r: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub iteration: usize,
    pub block: Block,
    pub acceptance: f64,
    pub kappa_before: f64,
    pub kappa_after: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// TMH calls whose Newton search hit the iteration cap.
    pub newton_capped: u64,
    /// TMH calls that fell back to a random-walk proposal.
    pub rw_fallbacks: u64,
    /// Whether the `r` scale matrix was replaced by the burn-in draw covariance.
    pub s_r_estimated: bool,
}

/// Retained draws stored block by block in flat, draw-major layouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub d_x: usize,
    pub d_rc: usize,
    /// Products per market.
    pub products: Vec<usize>,
    pub draws: usize,
    pub beta_bar: Vec<f64>,
    pub r: Vec<f64>,
    pub xi_bar: Vec<f64>,
    pub eta: Vec<f64>,
    pub gamma: Vec<u8>,
    pub phi: Vec<f64>,
    /// Slab variance draws, only when it is learned.
    pub tau1_sq: Vec<f64>,
    pub burn_in_acceptance: BlockCounters,
    pub acceptance: BlockCounters,
    pub calibration: Vec<CalibrationRecord>,
    pub kernel: KernelParams,
    pub diagnostics: Diagnostics,
}

impl PosteriorSamples {
    pub fn empty(d_x: usize, d_rc: usize, products: Vec<usize>, kernel: KernelParams) -> Self {
        Self {
            d_x,
            d_rc,
            products,
            draws: 0,
            beta_bar: Vec::new(),
            r: Vec::new(),
            xi_bar: Vec::new(),
            eta: Vec::new(),
            gamma: Vec::new(),
            phi: Vec::new(),
            tau1_sq: Vec::new(),
            burn_in_acceptance: BlockCounters::default(),
            acceptance: BlockCounters::default(),
            calibration: Vec::new(),
            kernel,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn markets(&self) -> usize {
        self.products.len()
    }

    pub fn total_products(&self) -> usize {
        self.products.iter().sum()
    }

    /// Offset of market `t`'s first product in the flattened `eta`/`gamma` rows.
    pub fn product_offset(&self, t: usize) -> usize {
        self.products[..t].iter().sum()
    }

    pub fn push(&mut self, state: &ParamState) {
        self.beta_bar.extend_from_slice(&state.beta_bar);
        self.r.extend_from_slice(&state.r);
        self.xi_bar.extend_from_slice(&state.xi_bar);
        for (eta, gamma) in state.eta.iter().zip(&state.gamma) {
            self.eta.extend_from_slice(eta);
            self.gamma.extend(gamma.iter().map(|&g| g as u8));
        }
        self.phi.extend_from_slice(&state.phi);
        self.draws += 1;
    }

    /// Reconstructs the full parameter state of retained draw `g`.
    pub fn state(&self, g: usize) -> ParamState {
        let (t, n) = (self.markets(), self.total_products());
        let eta_row = &self.eta[g * n..(g + 1) * n];
        let gamma_row = &self.gamma[g * n..(g + 1) * n];
        let mut eta = Vec::with_capacity(t);
        let mut gamma = Vec::with_capacity(t);
        let mut offset = 0;
        for &j in &self.products {
            eta.push(eta_row[offset..offset + j].to_vec());
            gamma.push(gamma_row[offset..offset + j].iter().map(|&v| v == 1).collect());
            offset += j;
        }
        ParamState {
            beta_bar: self.beta_bar[g * self.d_x..(g + 1) * self.d_x].to_vec(),
            r: self.r[g * self.d_rc..(g + 1) * self.d_rc].to_vec(),
            xi_bar: self.xi_bar[g * t..(g + 1) * t].to_vec(),
            eta,
            gamma,
            phi: self.phi[g * t..(g + 1) * t].to_vec(),
        }
    }

    fn column(values: &[f64], width: usize, k: usize) -> Vec<f64> {
        values.chunks(width).map(|row| row[k]).collect()
    }

    pub fn beta_column(&self, k: usize) -> Vec<f64> {
        Self::column(&self.beta_bar, self.d_x, k)
    }

    pub fn r_column(&self, k: usize) -> Vec<f64> {
        Self::column(&self.r, self.d_rc, k)
    }

    pub fn sigma_column(&self, k: usize) -> Vec<f64> {
        self.r_column(k).into_iter().map(f64::exp).collect()
    }

    pub fn xi_bar_column(&self, t: usize) -> Vec<f64> {
        Self::column(&self.xi_bar, self.markets(), t)
    }

    pub fn phi_column(&self, t: usize) -> Vec<f64> {
        Self::column(&self.phi, self.markets(), t)
    }

    pub fn eta_column(&self, t: usize, j: usize) -> Vec<f64> {
        Self::column(&self.eta, self.total_products(), self.product_offset(t) + j)
    }

    pub fn gamma_column(&self, t: usize, j: usize) -> Vec<f64> {
        let n = self.total_products();
        let idx = self.product_offset(t) + j;
        self.gamma.chunks(n).map(|row| row[idx] as f64).collect()
    }
}
