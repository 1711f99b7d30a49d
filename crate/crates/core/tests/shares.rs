mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use sparse_demand::model::{log_likelihood, shares_from_delta, simulate_shares};
use sparse_demand::quadrature::gauss_hermite;
use sparse_demand::{Dataset, MarketData, ParamState, RcDraws};

fn market_from_rows(x: &[[f64; 2]], q: Vec<u64>, size: u64) -> MarketData {
    let m = DMatrix::from_fn(x.len(), 2, |r, c| x[r][c]);
    MarketData::new("m", (0..x.len()).map(|k| k.to_string()).collect(), size, q, m).unwrap()
}

/// Choice probabilities written out term by term, integrated by a
/// one-dimensional quadrature rule over the price coefficient.
fn quadrature_shares(x: &[[f64; 2]], beta: [f64; 2], sigma: f64, xi: &[f64], rule: &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
    let (nodes, weights) = rule;
    let mut out = vec![0.0; x.len() + 1];
    for (v, w) in nodes.iter().zip(weights) {
        let expu: Vec<f64> = x
            .iter()
            .zip(xi)
            .map(|(row, e)| ((beta[0] + sigma * v) * row[0] + beta[1] * row[1] + e).exp())
            .collect();
        let denom = 1.0 + expu.iter().sum::<f64>();
        out[0] += w / denom;
        for (k, e) in expu.iter().enumerate() {
            out[k + 1] += w * e / denom;
        }
    }
    out
}

#[test]
fn monte_carlo_shares_track_quadrature() {
    let x = [[0.2, 1.1], [1.0, 1.6], [-0.4, 1.9]];
    let xi = [-0.8, -1.2, -0.3];
    let beta = [-1.0, 0.5];
    let sigma: f64 = 1.5;
    let oracle = quadrature_shares(&x, beta, sigma, &xi, &gauss_hermite(80).unwrap());
    let market = market_from_rows(&x, vec![0, 0, 0], 10);
    let delta: Vec<f64> = (0..3).map(|j| beta[0] * x[j][0] + beta[1] * x[j][1] + xi[j]).collect();

    let mc = normal_nodes(&mut rng(5), 200, 1);
    let s = shares_from_delta(&market, &[0], &[sigma], &delta, &mc).unwrap();
    for (a, b) in s.iter().zip(&oracle) {
        assert!((a - b).abs() < 2e-2, "{a} vs {b}");
    }

    let (n, w) = gauss_hermite(40).unwrap();
    let gh = RcDraws::weighted(DMatrix::from_column_slice(n.len(), 1, &n), w).unwrap();
    let s = shares_from_delta(&market, &[0], &[sigma], &delta, &gh).unwrap();
    for (a, b) in s.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn likelihood_matches_direct_sum() {
    let mut rng = rng(21);
    let data = random_dataset(&mut rng, 3, 2, vec![true, true]);
    let draws = normal_nodes(&mut rng, 30, 2);
    let state = random_state(&mut rng, &data);
    let nodes = draws.nodes();
    let sigma = state.sigma();
    let mut direct = 0.0;
    for (t, m) in data.markets().iter().enumerate() {
        let j = m.products();
        let mut shares = vec![0.0; j + 1];
        for i in 0..draws.count() {
            let u: Vec<f64> = (0..j)
                .map(|p| {
                    let mut v = state.xi_bar[t] + state.eta[t][p];
                    for k in 0..2 {
                        v += m.x()[(p, k)] * (state.beta_bar[k] + sigma[k] * nodes[(i, k)]);
                    }
                    v
                })
                .collect();
            let denom = 1.0 + u.iter().map(|v| v.exp()).sum::<f64>();
            shares[0] += 1.0 / denom / draws.count() as f64;
            for p in 0..j {
                shares[p + 1] += u[p].exp() / denom / draws.count() as f64;
            }
        }
        direct += m.outside_quantity() as f64 * shares[0].ln();
        for p in 0..j {
            direct += m.quantities()[p] as f64 * shares[p + 1].ln();
        }
    }
    let ll = log_likelihood(&data, &state, &draws).unwrap();
    assert!((ll - direct).abs() < 1e-9 * direct.abs(), "{ll} vs {direct}");
}

#[test]
fn zero_counts_drop_out() {
    let x = [[0.1, 1.0], [0.5, 1.5]];
    let m1 = market_from_rows(&x, vec![0, 40], 100);
    let data = Dataset::new(vec![m1], vec!["a".into(), "b".into()], vec![false, false]).unwrap();
    let draws = RcDraws::new(DMatrix::zeros(1, 0)).unwrap();
    let mut s = ParamState::zeros(&data);
    s.beta_bar = vec![0.3, -0.2];
    let shares = simulate_shares(data.market(0), &[], s.market(0), &draws).unwrap();
    let ll = log_likelihood(&data, &s, &draws).unwrap();
    assert!((ll - (60.0 * shares[0].ln() + 40.0 * shares[2].ln())).abs() < 1e-10);
}

#[test]
fn extreme_utilities_stay_finite() {
    let x = [[0.0, 0.0], [0.0, 0.0]];
    let market = market_from_rows(&x, vec![5, 5], 20);
    let draws = normal_nodes(&mut rng(1), 20, 1);
    for delta in [[800.0, -800.0], [-900.0, -950.0], [750.0, 760.0]] {
        let s = shares_from_delta(&market, &[0], &[2.0], &delta, &draws).unwrap();
        assert!(s.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn shares_form_a_simplex(
        delta in prop::collection::vec(-30.0f64..30.0, 1..8),
        sigma in 0.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let j = delta.len();
        let x: Vec<[f64; 2]> = (0..j).map(|k| [k as f64 * 0.3 - 1.0, 1.0]).collect();
        let market = market_from_rows(&x, vec![0; j], 1);
        let draws = normal_nodes(&mut rng(seed), 25, 1);
        let s = shares_from_delta(&market, &[0], &[sigma], &delta, &draws).unwrap();
        prop_assert!(s.iter().all(|v| *v >= 0.0 && *v <= 1.0));
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn raising_own_utility_raises_own_share_and_lowers_others(
        delta in prop::collection::vec(-5.0f64..5.0, 2..6),
        which in 0usize..6,
        bump in 0.01f64..2.0,
    ) {
        let j = delta.len();
        let k = which % j;
        let x: Vec<[f64; 2]> = (0..j).map(|p| [p as f64 * 0.5, 1.0]).collect();
        let market = market_from_rows(&x, vec![0; j], 1);
        let draws = normal_nodes(&mut rng(9), 25, 1);
        let before = shares_from_delta(&market, &[0], &[0.7], &delta, &draws).unwrap();
        let mut raised = delta.clone();
        raised[k] += bump;
        let after = shares_from_delta(&market, &[0], &[0.7], &raised, &draws).unwrap();
        for p in 0..=j {
            if p == k + 1 {
                prop_assert!(after[p] > before[p]);
            } else {
                prop_assert!(after[p] < before[p]);
            }
        }
    }

    #[test]
    fn plain_logit_shares_are_translation_invariant_in_ratios(
        delta in prop::collection::vec(-5.0f64..5.0, 2..6),
        shift in -3.0f64..3.0,
    ) {
        let j = delta.len();
        let x: Vec<[f64; 2]> = (0..j).map(|_| [0.0, 0.0]).collect();
        let market = market_from_rows(&x, vec![0; j], 1);
        let draws = RcDraws::new(DMatrix::zeros(1, 0)).unwrap();
        let a = shares_from_delta(&market, &[], &[], &delta, &draws).unwrap();
        let moved: Vec<f64> = delta.iter().map(|d| d + shift).collect();
        let b = shares_from_delta(&market, &[], &[], &moved, &draws).unwrap();
        for p in 1..j {
            prop_assert!(((a[p + 1] / a[1]) - (b[p + 1] / b[1])).abs() < 1e-9 * (a[p + 1] / a[1]));
        }
        prop_assert!(((b[1] / b[0]) / (a[1] / a[0]) - shift.exp()).abs() < 1e-9 * shift.exp());
    }
}
