use nalgebra::DMatrix;
use sparse_demand::dgp::{gen_dataset, DgpConfig};
use sparse_demand::model::{simulate_shares, MarketParams};
use sparse_demand::quadrature::gauss_hermite;
use sparse_demand::stats::ks_test;
use sparse_demand::RcDraws;
use statrs::distribution::{ContinuousCDF, Normal};

fn quadrature(n: usize) -> RcDraws {
    let (nodes, weights) = gauss_hermite(n).unwrap();
    RcDraws::weighted(DMatrix::from_column_slice(n, 1, &nodes), weights).unwrap()
}

#[test]
fn sparse_designs_plant_alternating_deviations() {
    for design in [1, 2] {
        let (data, truth) = gen_dataset(&DgpConfig::new(design, 5, 6, 3)).unwrap();
        for t in 0..6 {
            assert_eq!(truth.eta[t], vec![1.0, -1.0, 0.0, 0.0, 0.0]);
            let expect_alpha: Vec<f64> = if design == 1 {
                vec![0.0; 5]
            } else {
                vec![0.3, -0.3, 0.0, 0.0, 0.0]
            };
            assert_eq!(truth.alpha[t], expect_alpha);
            let x = data.market(t).x();
            for j in 0..5 {
                let w = x[(j, 1)];
                assert!((1.0..2.0).contains(&w));
                let p = truth.alpha[t][j] + 0.3 * w + truth.cost_shock[t][j];
                assert_eq!(x[(j, 0)], p);
            }
        }
        assert_eq!(truth.xi_bar, vec![-1.0; 6]);
    }
    let (_, truth) = gen_dataset(&DgpConfig::new(1, 15, 1, 3)).unwrap();
    assert_eq!(truth.eta[0].iter().filter(|e| **e != 0.0).count(), 6);
}

#[test]
fn endogenous_design_correlates_price_with_shock() {
    let (data, truth) = gen_dataset(&DgpConfig::new(2, 10, 200, 4)).unwrap();
    let mut p = Vec::new();
    let mut xi = Vec::new();
    for t in 0..200 {
        let x = data.market(t).x();
        p.extend((0..10).map(|j| x[(j, 0)]));
        xi.extend(truth.xi(t));
    }
    let n = p.len() as f64;
    let (mp, mx) = (p.iter().sum::<f64>() / n, xi.iter().sum::<f64>() / n);
    let cov: f64 = p.iter().zip(&xi).map(|(a, b)| (a - mp) * (b - mx)).sum::<f64>() / n;
    assert!(cov > 0.0, "covariance {cov}");
}

#[test]
fn dense_designs_draw_normal_deviations() {
    let normal = Normal::new(0.0, 1.0 / 3.0).unwrap();
    for design in [3, 4] {
        let (_, truth) = gen_dataset(&DgpConfig::new(design, 10, 300, 5)).unwrap();
        let eta: Vec<f64> = truth.eta.iter().flatten().cloned().collect();
        let (_, p) = ks_test(&eta, |v| normal.cdf(v));
        assert!(p > 0.01, "design {design}: KS p {p}");
        for (e, a) in truth.eta.iter().flatten().zip(truth.alpha.iter().flatten()) {
            let expect = match design {
                4 if *e >= 1.0 / 3.0 => 0.3,
                4 if *e <= -1.0 / 3.0 => -0.3,
                _ => 0.0,
            };
            assert_eq!(*a, expect);
        }
    }
}

#[test]
fn every_consumer_is_counted() {
    for design in 1..=4 {
        let (data, _) = gen_dataset(&DgpConfig::new(design, 7, 10, 6)).unwrap();
        for m in data.markets() {
            assert_eq!(m.quantities().iter().sum::<u64>() + m.outside_quantity(), m.market_size());
            assert_eq!(m.market_size(), 1000);
        }
    }
}

#[test]
fn simulated_shares_converge_to_model_shares() {
    let cfg = DgpConfig {
        consumers: 100_000,
        ..DgpConfig::new(1, 5, 20, 7)
    };
    let (data, truth) = gen_dataset(&cfg).unwrap();
    let rule = quadrature(80);
    let n = cfg.consumers as f64;
    let mut within = 0;
    let mut total = 0;
    for t in 0..20 {
        let market = data.market(t);
        let eta = truth.eta[t].clone();
        let p = MarketParams {
            beta_bar: &truth.beta_bar,
            r: &truth.r(),
            xi_bar: truth.xi_bar[t],
            eta: &eta,
        };
        let model = simulate_shares(market, data.rc_columns(), p, &rule).unwrap();
        for (j, q) in market.quantities().iter().enumerate() {
            let s = model[j + 1];
            let gap = (*q as f64 / n - s).abs();
            total += 1;
            if gap <= 3.0 * (s * (1.0 - s) / n).sqrt() {
                within += 1;
            }
        }
    }
    assert!(within as f64 >= 0.99 * total as f64 || total - within <= 1, "{within} of {total}");
}

#[test]
fn expected_counts_round_model_shares() {
    let cfg = DgpConfig {
        expected_counts: true,
        ..DgpConfig::new(3, 4, 5, 8)
    };
    let (data, truth) = gen_dataset(&cfg).unwrap();
    let rule = quadrature(80);
    for t in 0..5 {
        let market = data.market(t);
        let eta = truth.eta[t].clone();
        let p = MarketParams {
            beta_bar: &truth.beta_bar,
            r: &truth.r(),
            xi_bar: truth.xi_bar[t],
            eta: &eta,
        };
        let model = simulate_shares(market, data.rc_columns(), p, &rule).unwrap();
        for (j, q) in market.quantities().iter().enumerate() {
            assert!((*q as f64 - 1000.0 * model[j + 1]).abs() <= 1.0);
        }
    }
}

#[test]
fn replications_differ_but_repeat_exactly() {
    let a = gen_dataset(&DgpConfig::new(1, 5, 3, 9)).unwrap();
    let b = gen_dataset(&DgpConfig::new(1, 5, 3, 9)).unwrap();
    let c = gen_dataset(&DgpConfig {
        replication: 1,
        ..DgpConfig::new(1, 5, 3, 9)
    })
    .unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}
