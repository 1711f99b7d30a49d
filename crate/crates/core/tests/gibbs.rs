use nalgebra::DMatrix;
use sparse_demand::mcmc::{Blocks, McmcConfig, Sampler};
use sparse_demand::priors::{gamma_success_prob, phi_posterior};
use sparse_demand::stats::ks_test;
use sparse_demand::{Dataset, MarketData, ParamState, PriorConfig, RcDraws};
use statrs::distribution::{Beta, ContinuousCDF};

fn flat_market(products: usize) -> Dataset {
    let x = DMatrix::from_element(products, 1, 0.5);
    let ids = (0..products).map(|k| k.to_string()).collect();
    let market = MarketData::new("m", ids, 10 * products as u64, vec![1; products], x).unwrap();
    Dataset::new(vec![market], vec!["x".into()], vec![false]).unwrap()
}

fn only(blocks: Blocks) -> McmcConfig {
    McmcConfig {
        total_draws: 2,
        burn_in: 1,
        blocks,
        ..Default::default()
    }
}

const NONE: Blocks = Blocks {
    beta: false,
    r: false,
    xi_bar: false,
    eta: false,
    gamma: false,
    phi: false,
};

#[test]
fn gamma_frequencies_match_conditional() {
    let products = 100;
    let data = flat_market(products);
    let draws = RcDraws::new(DMatrix::zeros(1, 0)).unwrap();
    let prior = PriorConfig::defaults(1, 0);
    let cfg = only(Blocks { gamma: true, ..NONE });
    let points = [
        (0.0, 0.5),
        (0.02, 0.5),
        (0.05, 0.3),
        (0.08, 0.7),
        (0.1, 0.5),
        (0.12, 0.2),
        (-0.06, 0.9),
        (0.2, 0.05),
        (0.0, 0.95),
        (1.0, 0.5),
    ];
    for (eta, phi) in points {
        let mut init = ParamState::zeros(&data);
        init.eta[0] = vec![eta; products];
        init.phi[0] = phi;
        let mut sampler = Sampler::new(&data, &draws, &prior, &cfg, init).unwrap();
        let mut hits = 0u64;
        let sweeps = 1000;
        for _ in 0..sweeps {
            sampler.sweep(&cfg.blocks).unwrap();
            hits += sampler.state().gamma[0].iter().filter(|g| **g).count() as u64;
        }
        let n = (sweeps * products) as f64;
        let p = gamma_success_prob(eta, phi, &prior);
        let freq = hits as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((freq - p).abs() <= 3.0 * se + 1e-12, "eta {eta} phi {phi}: {freq} vs {p}");
    }
}

#[test]
fn phi_draws_follow_beta_conditional() {
    let products = 7;
    let data = flat_market(products);
    let draws = RcDraws::new(DMatrix::zeros(1, 0)).unwrap();
    let prior = PriorConfig::defaults(1, 0);
    let cfg = only(Blocks { phi: true, ..NONE });
    let mut init = ParamState::zeros(&data);
    init.gamma[0] = vec![true, false, true, false, false, false, true];
    let (a, b) = phi_posterior(&init.gamma[0], &prior);
    assert_eq!((a, b), (4.0, 5.0));
    let mut sampler = Sampler::new(&data, &draws, &prior, &cfg, init).unwrap();
    let sample: Vec<f64> = (0..100_000)
        .map(|_| {
            sampler.sweep(&cfg.blocks).unwrap();
            sampler.state().phi[0]
        })
        .collect();
    assert!(sample.iter().all(|p| *p > 0.0 && *p < 1.0));
    let beta = Beta::new(a, b).unwrap();
    let (_, pvalue) = ks_test(&sample, |x| beta.cdf(x));
    assert!(pvalue > 0.01, "KS p-value {pvalue}");
}
