mod common;

use common::*;
use proptest::prelude::*;
use sparse_demand::dgp::{gen_dataset, DgpConfig};
use sparse_demand::inversion::{contraction_invert, FixedParams, InversionOptions};
use sparse_demand::model::{log_likelihood, simulate_shares};
use sparse_demand::priors::{gamma_success_prob, log_normal_density, log_prior_eta, phi_posterior};
use sparse_demand::{MarketParams, PriorConfig};

proptest! {
    #[test]
    fn gamma_probability_rises_with_shock_size(eta in 0.0f64..2.0, step in 1e-3f64..1.0, phi in 0.01f64..0.99) {
        let prior = PriorConfig::defaults(1, 0);
        let lo = gamma_success_prob(eta, phi, &prior);
        let hi = gamma_success_prob(eta + step, phi, &prior);
        prop_assert!(hi >= lo);
        prop_assert!((gamma_success_prob(-eta, phi, &prior) - lo).abs() < 1e-15);
    }

    #[test]
    fn gamma_probability_rises_with_phi(eta in -2.0f64..2.0, phi in 0.01f64..0.9, step in 1e-3f64..0.09) {
        let prior = PriorConfig::defaults(1, 0);
        prop_assert!(gamma_success_prob(eta, phi + step, &prior) >= gamma_success_prob(eta, phi, &prior));
    }

    #[test]
    fn all_slab_prior_is_iid_normal(eta in prop::collection::vec(-3.0f64..3.0, 1..10)) {
        let prior = PriorConfig::defaults(1, 0);
        let gamma = vec![true; eta.len()];
        let direct: f64 = eta.iter().map(|e| log_normal_density(*e, 0.0, prior.tau1_sq)).sum();
        prop_assert!((log_prior_eta(&eta, &gamma, &prior) - direct).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn phi_posterior_adds_product_count(gamma in prop::collection::vec(any::<bool>(), 1..30)) {
        let prior = PriorConfig::defaults(1, 0);
        let (a, b) = phi_posterior(&gamma, &prior);
        prop_assert_eq!(a + b, prior.a_phi + prior.b_phi + gamma.len() as f64);
    }

    #[test]
    fn likelihood_ignores_common_shift_between_mean_and_shocks(seed in 0u64..500, shift in -2.0f64..2.0) {
        let mut r = rng(seed);
        let data = random_dataset(&mut r, 2, 2, vec![true, false]);
        let draws = normal_nodes(&mut r, 30, 1);
        let state = random_state(&mut r, &data);
        let mut moved = state.clone();
        moved.xi_bar.iter_mut().for_each(|x| *x += shift);
        moved.eta.iter_mut().flatten().for_each(|e| *e -= shift);
        let a = log_likelihood(&data, &state, &draws).unwrap();
        let b = log_likelihood(&data, &moved, &draws).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn repeated_likelihood_evaluations_are_bit_identical(seed in 0u64..500) {
        let mut r = rng(seed);
        let data = random_dataset(&mut r, 3, 2, vec![true, true]);
        let draws = normal_nodes(&mut r, 40, 2);
        let state = random_state(&mut r, &data);
        let a = log_likelihood(&data, &state, &draws).unwrap();
        let b = log_likelihood(&data, &state, &draws).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn inverted_shocks_reproduce_the_shares(seed in 0u64..500) {
        let mut r = rng(seed);
        let market = random_market(&mut r, "m", 4, 2, 1000);
        let draws = normal_nodes(&mut r, 50, 1);
        let beta = [-0.8, 0.4];
        let lr = [-0.5];
        let eta: Vec<f64> = (0..4).map(|k| -1.0 + 0.3 * k as f64).collect();
        let p = MarketParams { beta_bar: &beta, r: &lr, xi_bar: 0.0, eta: &eta };
        let s = simulate_shares(&market, &[0], p, &draws).unwrap()[1..].to_vec();
        let opts = InversionOptions::default();
        let xi = contraction_invert(&market, &s, &[0], FixedParams { beta_bar: &beta, r: &lr }, &draws, opts).unwrap();
        let back = simulate_shares(&market, &[0], MarketParams { eta: &xi, ..p }, &draws).unwrap();
        for (a, b) in back[1..].iter().zip(&s) {
            prop_assert!((a.ln() - b.ln()).abs() <= 10.0 * opts.tol);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_markets_conserve_consumers(design in 1u8..=4, products in 1usize..8, markets in 1usize..4, seed in 0u64..1000) {
        let cfg = DgpConfig { consumers: 300, ..DgpConfig::new(design, products, markets, seed) };
        let (data, _) = gen_dataset(&cfg).unwrap();
        for m in data.markets() {
            prop_assert_eq!(m.outside_quantity() + m.quantities().iter().sum::<u64>(), m.market_size());
        }
    }
}
