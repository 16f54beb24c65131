use arcrec::eval::{
    hit_ratio, kendall_tau, leave_last_one_out, ndcg, rank_by_scores, spearman_rho, split_products, cold_start_protocol,
    correlation_protocol,
};
use arcrec::graphs::ReferenceNetworks;
use arcrec::model::{ArcRec, ModelConfig};
use arcrec::pipeline::{fit_bprmf, training_data, FitConfig};
use arcrec::simulator::{simulate, MarketConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lists() -> impl Strategy<Value = (Vec<Vec<usize>>, Vec<usize>)> {
    (2usize..30, 1usize..12).prop_flat_map(|(n, consumers)| {
        prop::collection::vec(
            (Just((0..n).collect::<Vec<usize>>()).prop_shuffle(), 0..n),
            consumers,
        )
        .prop_map(|rows| rows.into_iter().unzip())
    })
}

fn brute_tau(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let pos = |l: &[usize], x: usize| l.iter().position(|&y| y == x).unwrap();
    let mut concordant = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (a[i], a[j]);
            if (pos(b, x) < pos(b, y)) == (i < j) {
                concordant += 1;
            }
        }
    }
    4.0 * concordant as f64 / (n * (n - 1)) as f64 - 1.0
}

proptest! {
    #[test]
    fn cutoff_metrics_are_monotone_and_ordered((ranked, held) in lists()) {
        let n = ranked[0].len();
        let mut last = (0.0, 0.0);
        for k in 1..=n + 1 {
            let hr = hit_ratio(&ranked, &held, k).unwrap();
            let nd = ndcg(&ranked, &held, k).unwrap();
            prop_assert!(nd <= hr + 1e-15 && hr <= 1.0);
            prop_assert!(hr >= last.0 && nd >= last.1);
            last = (hr, nd);
        }
        prop_assert_eq!(last.0, 1.0);
    }

    #[test]
    fn metrics_ignore_consumer_order((ranked, held) in lists(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..ranked.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let r2: Vec<Vec<usize>> = order.iter().map(|&i| ranked[i].clone()).collect();
        let h2: Vec<usize> = order.iter().map(|&i| held[i]).collect();
        for k in [1, 3, 10] {
            let a = hit_ratio(&ranked, &held, k).unwrap();
            let b = hit_ratio(&r2, &h2, k).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            let a = ndcg(&ranked, &held, k).unwrap();
            let b = ndcg(&r2, &h2, k).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kendall_matches_pair_counting_on_longer_lists(
        a in Just((0..40usize).collect::<Vec<_>>()).prop_shuffle(),
        b in Just((0..40usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let tau = kendall_tau(&a, &b).unwrap();
        prop_assert!((tau - brute_tau(&a, &b)).abs() < 1e-12);
        prop_assert!((tau - kendall_tau(&b, &a).unwrap()).abs() < 1e-12);
        let reversed: Vec<usize> = b.iter().rev().copied().collect();
        prop_assert!((kendall_tau(&a, &reversed).unwrap() + tau).abs() < 1e-12);
        let rho = spearman_rho(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&rho));
        prop_assert!((spearman_rho(&a, &reversed).unwrap() + rho).abs() < 1e-12);
    }
}

#[test]
fn random_order_of_two_cold_products_hits_half_the_time() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let trials = 40_000;
    let mut hits = 0;
    for _ in 0..trials {
        let scores = [rng.random::<f64>(), rng.random::<f64>()];
        hits += (rank_by_scores(&[0, 1], &scores)[0] == 0) as usize;
    }
    let rate = hits as f64 / trials as f64;
    assert!((rate - 0.5).abs() < 0.01, "{rate}");
}

#[test]
fn single_cold_product_is_always_a_hit() {
    let sim = simulate(
        &MarketConfig {
            num_consumers: 40,
            num_products: 20,
            ..MarketConfig::default()
        },
        4,
        1,
    )
    .unwrap();
    let cold = sim.log.records()[0].product;
    let split = split_products(&sim.catalog, &sim.log, &[cold]).unwrap();
    let nets = ReferenceNetworks::build(&split.warm_log, &split.warm_catalog, &Default::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = ModelConfig {
        dim: 4,
        ..ModelConfig::default()
    };
    let model = ArcRec::new(config, &nets.layers, split.warm_catalog.prices(), &mut rng).unwrap();
    let report = cold_start_protocol(&model.scorer().unwrap(), &split, 50, &[1, 5], 2).unwrap();
    assert_eq!(report.cold_products, 1);
    assert!(report.metrics.consumers > 0);
    assert_eq!(report.metrics.hit_ratio, vec![1.0, 1.0]);
    assert_eq!(report.metrics.ndcg, vec![1.0, 1.0]);
}

#[test]
fn trained_baseline_beats_random_on_simulation_truth() {
    let sim = simulate(&MarketConfig::default(), 1, 1).unwrap();
    let n = sim.catalog.len();
    let sequences = sim.log.sequences();
    let split = leave_last_one_out(&sequences);
    let mut config = FitConfig::default();
    config.model.dim = 16;
    config.train.max_epochs = 10;
    config.train.eval_every = 5;
    let (model, _) = fit_bprmf(sim.log.num_consumers(), &training_data(&split, n), &config, 1, 1, |_| {}).unwrap();
    let truth: Vec<Vec<usize>> = sim.histories.iter().map(|h| h.true_ranking()).collect();
    let report = correlation_protocol(&model, &sequences, &truth, n, 2).unwrap();
    assert!(report.kendall_tau > 0.0, "{}", report.kendall_tau);
    assert!(report.spearman_rho > 0.0, "{}", report.spearman_rho);
}
