//! Demand inversion: the share contraction for unrestricted `xi_t`, the
//! Newton solve of the sparsity-restricted subsystem, and the closed-form
//! nested-logit solve with four products.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::model::{ChoiceProbs, MarketData, NodeOffsets, RcDraws};

/// Non-`xi` parameters held fixed during inversion.
#[derive(Clone, Copy, Debug)]
pub struct FixedParams<'a> {
    pub beta_bar: &'a [f64],
    pub r: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionOptions {
    /// Sup-norm tolerance on log shares.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 5000,
        }
    }
}

fn check_shares(market: &MarketData, shares: &[f64]) -> Result<f64> {
    if shares.len() != market.products() {
        return Err(Error::dim(market.id(), "observed shares", market.products(), shares.len()));
    }
    if let Some(j) = shares.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidData(format!(
            "market {}: share of product {} is {}, inversion needs strictly positive shares",
            market.id(),
            j,
            shares[j]
        )));
    }
    let outside = 1.0 - shares.iter().sum::<f64>();
    if !(outside > 0.0) {
        return Err(Error::InvalidData(format!(
            "market {}: inside shares sum to {} (must be below 1)",
            market.id(),
            1.0 - outside
        )));
    }
    Ok(outside)
}

fn linear_index(market: &MarketData, beta_bar: &[f64]) -> Result<Vec<f64>> {
    if beta_bar.len() != market.x().ncols() {
        return Err(Error::dim(market.id(), "beta_bar", market.x().ncols(), beta_bar.len()));
    }
    let zeros = vec![0.0; market.products()];
    Ok(crate::model::delta_unchecked(market.x(), beta_bar, 0.0, &zeros))
}

fn offsets(market: &MarketData, rc_columns: &[usize], params: FixedParams, draws: &RcDraws) -> Result<NodeOffsets> {
    if params.r.len() != rc_columns.len() {
        return Err(Error::dim(market.id(), "r", rc_columns.len(), params.r.len()));
    }
    if !rc_columns.is_empty() && draws.dim() != rc_columns.len() {
        return Err(Error::dim(market.id(), "integration node dimension", rc_columns.len(), draws.dim()));
    }
    let sigma: Vec<f64> = params.r.iter().map(|r| r.exp()).collect();
    Ok(NodeOffsets::new(market, rc_columns, &sigma, draws))
}

/// Solves `s = sigma(X beta_bar + xi)` for the full `xi_t` by the fixed
/// point `delta <- delta + ln s - ln sigma(delta)`, started at the plain-logit
/// inversion. `shares` are the inside shares.
pub fn contraction_invert(
    market: &MarketData,
    shares: &[f64],
    rc_columns: &[usize],
    params: FixedParams,
    draws: &RcDraws,
    opts: InversionOptions,
) -> Result<Vec<f64>> {
    let outside = check_shares(market, shares)?;
    let xb = linear_index(market, params.beta_bar)?;
    let offsets = offsets(market, rc_columns, params, draws)?;
    let log_s: Vec<f64> = shares.iter().map(|s| s.ln()).collect();
    let mut delta: Vec<f64> = log_s.iter().map(|ls| ls - outside.ln()).collect();
    let mut change = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let probs = ChoiceProbs::new(&delta, &offsets);
        change = 0.0;
        for (j, d) in delta.iter_mut().enumerate() {
            let step = log_s[j] - probs.log_shares[j + 1];
            *d += step;
            change = change.max(step.abs());
        }
        if !change.is_finite() {
            break;
        }
        if change <= opts.tol {
            return Ok(delta.iter().zip(&xb).map(|(d, x)| d - x).collect());
        }
    }
    Err(Error::NotConverged {
        method: "share contraction",
        iterations: opts.max_iter,
        residual: change,
    })
}

/// Per-market set of products constrained to a common shock `nu_t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePattern {
    sparse: Vec<usize>,
    free: Vec<usize>,
}

impl SparsePattern {
    pub fn new(products: usize, sparse: &[usize]) -> Result<Self> {
        let mut mask = vec![false; products];
        for &k in sparse {
            if k >= products {
                return Err(Error::InvalidConfig(format!("sparse index {k} out of range for {products} products")));
            }
            if mask[k] {
                return Err(Error::InvalidConfig(format!("sparse index {k} listed twice")));
            }
            mask[k] = true;
        }
        let mut sorted = sparse.to_vec();
        sorted.sort_unstable();
        Ok(Self {
            sparse: sorted,
            free: (0..products).filter(|&j| !mask[j]).collect(),
        })
    }

    pub fn sparse(&self) -> &[usize] {
        &self.sparse
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn is_unrestricted(&self) -> bool {
        self.sparse.is_empty()
    }

    /// Products whose share equations form the square subsystem: every free
    /// product and the lowest-index sparse product.
    pub fn equations(&self) -> Vec<usize> {
        let mut eq = self.free.clone();
        if let Some(&first) = self.sparse.first() {
            eq.push(first);
        }
        eq
    }

    /// Full `xi_t` with the free values in place and `nu` on the sparse set.
    pub fn embed(&self, free_xi: &[f64], nu: f64) -> Vec<f64> {
        let mut xi = vec![nu; self.free.len() + self.sparse.len()];
        for (&j, &v) in self.free.iter().zip(free_xi) {
            xi[j] = v;
        }
        xi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestrictedSolution {
    /// Shocks of the free products, in product order.
    pub free_xi: Vec<f64>,
    pub nu: f64,
    /// The full `xi_t`.
    pub xi: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Share Jacobian `d sigma_j / d delta_m` over inside goods.
fn share_jacobian(probs: &ChoiceProbs, offsets: &NodeOffsets) -> DMatrix<f64> {
    let j = offsets.products;
    let mut jac = DMatrix::zeros(j, j);
    for i in 0..offsets.nodes() {
        let w = offsets.weights[i];
        let row = probs.node(i);
        for a in 0..j {
            let sa = row[a + 1];
            jac[(a, a)] += w * sa;
            for b in 0..j {
                jac[(a, b)] -= w * sa * row[b + 1];
            }
        }
    }
    jac
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Solves the square subsystem `s_j = sigma_j(xi_t)` over the free products
/// and one sparse product, with `xi` restricted to share `nu` on the sparse
/// set. Damped Newton on log-share residuals; `start` overrides the
/// plain-logit starting point as `(free_xi, nu)`.
pub fn restricted_invert(
    market: &MarketData,
    shares: &[f64],
    pattern: &SparsePattern,
    rc_columns: &[usize],
    params: FixedParams,
    draws: &RcDraws,
    opts: InversionOptions,
    start: Option<(&[f64], f64)>,
) -> Result<RestrictedSolution> {
    if pattern.is_unrestricted() {
        return Err(Error::InvalidConfig("restricted inversion needs a nonempty sparse set".into()));
    }
    let outside = check_shares(market, shares)?;
    if pattern.free.len() + pattern.sparse.len() != market.products() {
        return Err(Error::dim(
            market.id(),
            "sparse pattern",
            market.products(),
            pattern.free.len() + pattern.sparse.len(),
        ));
    }
    let xb = linear_index(market, params.beta_bar)?;
    let offsets = offsets(market, rc_columns, params, draws)?;
    let equations = pattern.equations();
    let n = equations.len();
    let logit = |j: usize| (shares[j] / outside).ln() - xb[j];
    let mut unknowns = match start {
        Some((free, nu)) => {
            if free.len() != pattern.free.len() {
                return Err(Error::dim(market.id(), "starting free shocks", pattern.free.len(), free.len()));
            }
            DVector::from_iterator(n, free.iter().cloned().chain(std::iter::once(nu)))
        }
        None => DVector::from_iterator(n, equations.iter().map(|&j| logit(j))),
    };

    let evaluate = |u: &DVector<f64>| -> (DVector<f64>, ChoiceProbs) {
        let xi = pattern.embed(&u.as_slice()[..n - 1], u[n - 1]);
        let delta: Vec<f64> = xi.iter().zip(&xb).map(|(a, b)| a + b).collect();
        let probs = ChoiceProbs::new(&delta, &offsets);
        let res = DVector::from_iterator(n, equations.iter().map(|&j| probs.log_shares[j + 1] - shares[j].ln()));
        (res, probs)
    };

    let (mut residual, mut probs) = evaluate(&unknowns);
    let mut last_jacobian = DMatrix::zeros(n, n);
    for iteration in 0..opts.max_iter {
        let norm = residual.amax();
        if norm <= opts.tol {
            let xi = pattern.embed(&unknowns.as_slice()[..n - 1], unknowns[n - 1]);
            return Ok(RestrictedSolution {
                free_xi: unknowns.as_slice()[..n - 1].to_vec(),
                nu: unknowns[n - 1],
                xi,
                iterations: iteration,
                residual: norm,
            });
        }
        let full = share_jacobian(&probs, &offsets);
        let mut jac = DMatrix::zeros(n, n);
        for (a, &j) in equations.iter().enumerate() {
            let inv = 1.0 / probs.shares[j + 1];
            for (b, &m) in pattern.free.iter().enumerate() {
                jac[(a, b)] = full[(j, m)] * inv;
            }
            jac[(a, n - 1)] = pattern.sparse.iter().map(|&m| full[(j, m)]).sum::<f64>() * inv;
        }
        last_jacobian = jac.clone();
        let step = match jac.lu().solve(&residual) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => break,
        };
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-10 {
            let trial = &unknowns - &step * alpha;
            let (r, p) = evaluate(&trial);
            if r.iter().all(|v| v.is_finite()) && r.amax() < norm {
                unknowns = trial;
                residual = r;
                probs = p;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(Error::InvalidData(format!(
        "market {}: restricted inversion did not converge (residual {:.3e}, Jacobian condition number {:.3e})",
        market.id(),
        residual.amax(),
        condition_number(&last_jacobian)
    )))
}

/// Inputs of the four-product nested logit in which products 2, 3 and 4
/// share the common shock `nu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NestedLogitInput {
    pub shares: [f64; 4],
    pub outside_share: f64,
    pub x: [f64; 4],
    /// Nest label of each product.
    pub nests: [usize; 4],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NestedLogitSolution {
    pub xi1: f64,
    pub nu: f64,
    pub beta: f64,
    pub lambda: f64,
}

/// Within-nest shares `s_j / sum_{k in g(j)} s_k`.
pub fn within_nest_shares(shares: &[f64; 4], nests: &[usize; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for j in 0..4 {
        let total: f64 = (0..4).filter(|&k| nests[k] == nests[j]).map(|k| shares[k]).sum();
        out[j] = shares[j] / total;
    }
    out
}

/// Exact solve of `ln(s_j / s_0) = x_j beta + xi_j + lambda ln s_{j|g}`
/// with `xi_1` free and `xi_2 = xi_3 = xi_4 = nu`.
pub fn nested_logit_solve(input: &NestedLogitInput) -> Result<NestedLogitSolution> {
    if input.shares.iter().chain(std::iter::once(&input.outside_share)).any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidData("nested logit shares must be strictly positive".into()));
    }
    let within = within_nest_shares(&input.shares, &input.nests);
    let mut a = Matrix4::zeros();
    let mut b = Vector4::zeros();
    for j in 0..4 {
        a[(j, 0)] = if j == 0 { 1.0 } else { 0.0 };
        a[(j, 1)] = if j == 0 { 0.0 } else { 1.0 };
        a[(j, 2)] = input.x[j];
        a[(j, 3)] = within[j].ln();
        b[j] = (input.shares[j] / input.outside_share).ln();
    }
    let sv = a.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(min > 1e-12 * max) {
        return Err(Error::Singular(format!(
            "X collinear with sparsity indicators (singular value ratio {:.3e})",
            min / max
        )));
    }
    let theta = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("X collinear with sparsity indicators".into()))?;
    Ok(NestedLogitSolution {
        xi1: theta[0],
        nu: theta[1],
        beta: theta[2],
        lambda: theta[3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_equations_use_first_sparse_product() {
        let p = SparsePattern::new(5, &[4, 1, 3]).unwrap();
        assert_eq!(p.free(), &[0, 2]);
        assert_eq!(p.equations(), vec![0, 2, 1]);
        assert_eq!(p.embed(&[0.5, -0.5], 2.0), vec![0.5, 2.0, -0.5, 2.0, 2.0]);
    }

    #[test]
    fn pattern_rejects_bad_indices() {
        assert!(SparsePattern::new(3, &[3]).is_err());
        assert!(SparsePattern::new(3, &[1, 1]).is_err());
    }

    #[test]
    fn within_nest_shares_sum_to_one_per_nest() {
        let w = within_nest_shares(&[0.1, 0.2, 0.3, 0.1], &[0, 0, 1, 1]);
        assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
        assert!((w[2] - 0.75).abs() < 1e-15);
    }
}
