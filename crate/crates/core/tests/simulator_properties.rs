use arcrec::simulator::{choice_probabilities, generate_market, simulate, MarketConfig, StickerShock};
use proptest::prelude::*;

fn small(consumers: usize, products: usize) -> MarketConfig {
    MarketConfig {
        num_consumers: consumers,
        num_products: products,
        ..MarketConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_seed_same_market_and_truth(seed in any::<u64>(), consumers in 1usize..20, products in 2usize..20) {
        let config = small(consumers, products);
        let a = simulate(&config, seed, 1).unwrap();
        let b = simulate(&config, seed, 3).unwrap();
        prop_assert_eq!(&a.catalog, &b.catalog);
        prop_assert_eq!(&a.log, &b.log);
        prop_assert_eq!(&a.market.sensitivity, &b.market.sensitivity);
        for (x, y) in a.histories.iter().zip(&b.histories) {
            prop_assert_eq!(&x.purchases, &y.purchases);
            prop_assert_eq!(&x.true_utility, &y.true_utility);
            prop_assert_eq!(&x.reference_prices, &y.reference_prices);
        }
    }

    #[test]
    fn reference_price_is_the_running_mean(seed in any::<u64>()) {
        let sim = simulate(&small(15, 12), seed, 1).unwrap();
        let m = &sim.market;
        for h in &sim.histories {
            prop_assert_eq!(h.reference_prices.len(), h.purchases.len() + 1);
            prop_assert_eq!(h.reference_prices[0], m.mean_price());
            let mut spent = 0.0;
            for (t, &i) in h.purchases.iter().enumerate() {
                spent += m.prices[i];
                prop_assert_eq!(h.reference_prices[t + 1], spent / (t + 1) as f64);
            }
        }
    }

    #[test]
    fn truth_is_a_strict_order_consistent_with_probabilities(seed in any::<u64>()) {
        let sim = simulate(&small(10, 25), seed, 1).unwrap();
        for h in &sim.histories {
            let ranking = h.true_ranking();
            let mut sorted = ranking.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..25).collect::<Vec<_>>());
            for w in ranking.windows(2) {
                prop_assert!(h.true_utility[w[0]] > h.true_utility[w[1]]);
                prop_assert!(h.true_prob[w[0]] >= h.true_prob[w[1]]);
            }
            prop_assert!((h.true_prob.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logs_match_histories(seed in any::<u64>()) {
        let config = small(12, 10);
        let sim = simulate(&config, seed, 2).unwrap();
        let sequences = sim.log.sequences();
        for (u, h) in sim.histories.iter().enumerate() {
            prop_assert_eq!(&sequences[u], &h.purchases);
            prop_assert!((config.min_periods..=config.max_periods).contains(&h.purchases.len()));
        }
        for r in sim.log.records() {
            prop_assert!(r.timestamp >= 0 && (r.timestamp as usize) < config.max_periods);
        }
    }

    #[test]
    fn sensitivities_are_negative_in_both_orientations(seed in any::<u64>(), as_written in any::<bool>()) {
        let config = MarketConfig {
            sticker_shock: if as_written { StickerShock::AsWritten } else { StickerShock::PriceAverse },
            ..small(30, 5)
        };
        let market = generate_market(&config, seed).unwrap();
        prop_assert!(market.sensitivity.iter().all(|&b| b < 0.0));
    }

    #[test]
    fn softmax_sums_to_one(u in prop::collection::vec(-500.0f64..500.0, 1..60)) {
        let p = choice_probabilities(&u);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn logit_examples() {
    assert_eq!(choice_probabilities(&[0.7, 0.7]), vec![0.5, 0.5]);
    let p = choice_probabilities(&[0.0, 3f64.ln()]);
    assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
}

#[test]
fn cheaper_is_better_for_a_price_averse_consumer() {
    let market = generate_market(&small(5, 8), 3).unwrap();
    for u in 0..5 {
        for i in 0..8 {
            let base = market.utility_at_price(u, i, 2.0, 3.0);
            let cheaper = market.utility_at_price(u, i, 1.5, 3.0);
            assert!(cheaper > base);
        }
    }
}
