#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_demand::{Dataset, MarketData, ParamState, RcDraws};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random market with `j` products, `d_x` characteristics and arbitrary counts.
pub fn random_market(rng: &mut ChaCha8Rng, id: &str, j: usize, d_x: usize, size: u64) -> MarketData {
    let x = DMatrix::from_fn(j, d_x, |_, _| rng.random_range(-1.5..1.5));
    let mut left = size;
    let mut q = Vec::with_capacity(j);
    for _ in 0..j {
        let take = rng.random_range(0..=left / 3);
        q.push(take);
        left -= take;
    }
    MarketData::new(id, (0..j).map(|k| format!("p{k}")).collect(), size, q, x).unwrap()
}

pub fn random_dataset(rng: &mut ChaCha8Rng, markets: usize, d_x: usize, rc_mask: Vec<bool>) -> Dataset {
    let ms = (0..markets)
        .map(|t| {
            let j = rng.random_range(2..=6);
            random_market(rng, &format!("m{t}"), j, d_x, 1000)
        })
        .collect();
    let names = (0..d_x).map(|k| format!("x{k}")).collect();
    Dataset::new(ms, names, rc_mask).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, data: &Dataset) -> ParamState {
    let mut s = ParamState::zeros(data);
    s.beta_bar.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
    s.r.iter_mut().for_each(|r| *r = rng.random_range(-1.5..0.3));
    s.xi_bar.iter_mut().for_each(|x| *x = rng.random_range(-2.0..0.5));
    for (eta, gamma) in s.eta.iter_mut().zip(s.gamma.iter_mut()) {
        for (e, g) in eta.iter_mut().zip(gamma.iter_mut()) {
            *g = rng.random_bool(0.5);
            *e = if *g { rng.random_range(-1.0..1.0) } else { rng.random_range(-0.05..0.05) };
        }
    }
    s
}

pub fn normal_nodes(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> RcDraws {
    RcDraws::standard_normal(count, dim, rng).unwrap()
}

/// Fourth-order central difference of `f` at `x` along coordinate `k`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let at = |t: f64| {
        let mut y = x.to_vec();
        y[k] += t;
        f(&y)
    };
    (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
}

/// Sup-norm error relative to the sup norm of the reference.
pub fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let err = analytic
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    err / scale
}
