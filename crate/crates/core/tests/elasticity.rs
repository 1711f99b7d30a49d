mod common;

use common::*;
use rand::Rng;
use sparse_demand::dgp::{gen_dataset, DgpConfig};
use sparse_demand::elasticity::{elasticity_matrix, posterior_elasticity, ElasticityRequest};
use sparse_demand::mcmc::{run_chain, KernelParams, McmcConfig, PosteriorSamples};
use sparse_demand::model::{simulate_shares, MarketParams};
use sparse_demand::{MarketData, PriorConfig, RcDraws};

const PRICE: usize = 0;

fn shares_with_price(market: &MarketData, p: MarketParams, draws: &RcDraws, rc: &[usize], m: usize, price: f64) -> Vec<f64> {
    let mut x = market.x().clone();
    x[(m, PRICE)] = price;
    let bumped = market.with_characteristics(x).unwrap();
    simulate_shares(&bumped, rc, p, draws).unwrap()
}

#[test]
fn plain_logit_identities() {
    let mut rng = rng(41);
    let market = random_market(&mut rng, "m", 5, 2, 1000);
    let draws = normal_nodes(&mut rng, 20, 1);
    let eta = [0.1, -0.2, 0.0, 0.3, -0.4];
    let p = MarketParams {
        beta_bar: &[-1.3, 0.4],
        r: &[],
        xi_bar: -0.5,
        eta: &eta,
    };
    let e = elasticity_matrix(&market, &[], p, &draws, PRICE).unwrap();
    let s = simulate_shares(&market, &[], p, &draws).unwrap();
    let x = market.x();
    for j in 0..5 {
        for m in 0..5 {
            let expect = if j == m {
                -1.3 * x[(j, PRICE)] * (1.0 - s[j + 1])
            } else {
                1.3 * x[(m, PRICE)] * s[m + 1]
            };
            assert!((e[(j, m)] - expect).abs() < 1e-12, "({j},{m}) {} vs {expect}", e[(j, m)]);
        }
    }
}

#[test]
fn zero_price_coefficient_gives_zero_elasticities() {
    let mut rng = rng(42);
    let market = random_market(&mut rng, "m", 4, 2, 1000);
    let draws = normal_nodes(&mut rng, 30, 1);
    let p = MarketParams {
        beta_bar: &[0.0, 0.8],
        r: &[0.3],
        xi_bar: -1.0,
        eta: &[0.0; 4],
    };
    // The random coefficient sits on the second column, so price has none.
    let e = elasticity_matrix(&market, &[1], p, &draws, PRICE).unwrap();
    assert!(e.iter().all(|v| *v == 0.0));
}

#[test]
fn matches_finite_differences() {
    let mut rng = rng(43);
    for _ in 0..20 {
        let j = rng.random_range(2..=6);
        let market = random_market(&mut rng, "m", j, 2, 1000);
        let draws = normal_nodes(&mut rng, 100, 1);
        let beta = [rng.random_range(-2.0..0.0), rng.random_range(-1.0..1.0)];
        let r = [rng.random_range(-1.0..0.5)];
        let eta: Vec<f64> = (0..j).map(|_| rng.random_range(-0.5..0.5)).collect();
        let p = MarketParams {
            beta_bar: &beta,
            r: &r,
            xi_bar: rng.random_range(-1.5..0.0),
            eta: &eta,
        };
        let e = elasticity_matrix(&market, &[PRICE], p, &draws, PRICE).unwrap();
        let base = simulate_shares(&market, &[PRICE], p, &draws).unwrap();
        for m in 0..j {
            let price = market.x()[(m, PRICE)];
            if price.abs() < 0.05 {
                continue;
            }
            let h = 1e-6 * price.abs();
            let up = shares_with_price(&market, p, &draws, &[PRICE], m, price + h);
            let down = shares_with_price(&market, p, &draws, &[PRICE], m, price - h);
            for a in 0..j {
                let fd = (up[a + 1] - down[a + 1]) / (2.0 * h) * price / base[a + 1];
                let scale = e[(a, m)].abs().max(1e-3);
                assert!((e[(a, m)] - fd).abs() / scale < 1e-4, "({a},{m}) {} vs {fd}", e[(a, m)]);
            }
        }
    }
}

#[test]
fn cross_elasticities_equal_within_column_only_without_random_coefficient() {
    let (data, _) = gen_dataset(&DgpConfig::new(1, 5, 1, 44)).unwrap();
    let market = data.market(0);
    let draws = normal_nodes(&mut rng(44), 200, 1);
    let eta = [1.0, -1.0, 0.0, 0.0, 0.0];
    let params = |r: &'static [f64]| MarketParams {
        beta_bar: &[-1.0, 0.5],
        r,
        xi_bar: -1.0,
        eta: &eta,
    };
    let plain = elasticity_matrix(market, &[], params(&[]), &draws, PRICE).unwrap();
    let mixed = elasticity_matrix(market, &[PRICE], params(&[0.405]), &draws, PRICE).unwrap();
    for m in 0..5 {
        let cross: Vec<usize> = (0..5).filter(|&j| j != m).collect();
        let first = plain[(cross[0], m)];
        assert!(cross.iter().all(|&j| (plain[(j, m)] - first).abs() <= 1e-12 * first.abs()));
        let spread = cross.iter().map(|&j| mixed[(j, m)]).fold(f64::NEG_INFINITY, f64::max)
            - cross.iter().map(|&j| mixed[(j, m)]).fold(f64::INFINITY, f64::min);
        assert!(spread > 1e-6, "column {m} spread {spread}");
    }
}

#[test]
fn own_elasticity_opposes_price_when_the_mean_coefficient_dominates() {
    let (data, _) = gen_dataset(&DgpConfig::new(1, 5, 10, 47)).unwrap();
    let draws = normal_nodes(&mut rng(47), 200, 1);
    let mut rng = rng(48);
    for _ in 0..20 {
        let beta: [f64; 2] = [rng.random_range(-3.0..-0.5), 0.5];
        let r = [(beta[0].abs() / rng.random_range(10.0..50.0)).ln()];
        for t in 0..data.market_count() {
            let market = data.market(t);
            let p = MarketParams {
                beta_bar: &beta,
                r: &r,
                xi_bar: -1.0,
                eta: &[0.0; 5],
            };
            let e = elasticity_matrix(market, &[PRICE], p, &draws, PRICE).unwrap();
            for j in 0..5 {
                let price = market.x()[(j, PRICE)];
                assert!(e[(j, j)] * price < 0.0 || price == 0.0);
            }
        }
    }
}

#[test]
fn identical_draws_collapse_the_interval() {
    let (data, truth) = gen_dataset(&DgpConfig::new(1, 3, 2, 45)).unwrap();
    let draws = normal_nodes(&mut rng(45), 50, 1);
    let kernel = KernelParams {
        kappa_beta: 1.0,
        kappa_eta: vec![1.0; 2],
        kappa_xi: 0.1,
        kappa_r: 0.1,
        s_r: vec![1.0],
    };
    let mut samples = PosteriorSamples::empty(2, 1, data.product_counts(), kernel);
    let mut state = sparse_demand::ParamState::zeros(&data);
    state.beta_bar = truth.beta_bar.clone();
    state.r = vec![truth.r()[0]];
    state.xi_bar = truth.xi_bar.clone();
    state.eta = truth.eta.clone();
    for _ in 0..7 {
        samples.push(&state);
    }
    let out = posterior_elasticity(&samples, &data, &draws, &ElasticityRequest { price_col: PRICE, ..Default::default() }).unwrap();
    assert_eq!(out.entries.len(), 2 * 9);
    assert_eq!(out.draws_used, 7);
    for e in &out.entries {
        assert_eq!(e.posterior.sd, 0.0);
        assert_eq!(e.posterior.ci_lo, e.posterior.mean);
        assert_eq!(e.posterior.ci_hi, e.posterior.mean);
        assert!((e.posterior.mean - e.at_posterior_mean).abs() <= 1e-12 * e.at_posterior_mean.abs().max(1.0));
    }
}

#[test]
fn posterior_mean_elasticity_differs_from_plug_in() {
    let (data, _) = gen_dataset(&DgpConfig::new(1, 5, 5, 46)).unwrap();
    let prior = PriorConfig::defaults(2, 1);
    let cfg = McmcConfig {
        total_draws: 600,
        burn_in: 300,
        rc_nodes: 100,
        seed: 46,
        ..Default::default()
    };
    let samples = run_chain(&data, &prior, &cfg).unwrap();
    let draws = sparse_demand::mcmc::fit_nodes(&data, &cfg).unwrap();
    let request = ElasticityRequest {
        price_col: PRICE,
        ..Default::default()
    };
    let out = posterior_elasticity(&samples, &data, &draws, &request).unwrap();
    let own: Vec<_> = out.entries.iter().filter(|e| e.j == e.m).collect();
    assert_eq!(own.len(), 25);
    assert!(out.own_sd > 0.0);
    // Averaging over draws and evaluating at averaged parameters differ.
    assert!(own.iter().any(|e| (e.posterior.mean - e.at_posterior_mean).abs() > 1e-6));
}
