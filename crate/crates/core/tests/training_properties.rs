use arcrec::eval::{leave_last_one_out, BprMf};
use arcrec::graphs::{Catalog, RawProduct, ReferenceNetworks, TransactionLog};
use arcrec::model::{ArcRec, ModelConfig};
use arcrec::numeric::{AdamConfig, AdamState, Matrix, Tape, Var};
use arcrec::pipeline::{fit_arcrec, fit_bprmf, training_data, training_log, FitConfig};
use arcrec::simulator::{simulate, MarketConfig};
use arcrec::training::{
    bpr_loss, bpr_term, fit, validation_metrics, TrainConfig, Trainable, TrainingData, Triplet, TripletSampler,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Market {
    catalog: Catalog,
    log: TransactionLog,
    data: TrainingData,
}

fn market(consumers: usize, products: usize, seed: u64) -> Market {
    let config = MarketConfig {
        num_consumers: consumers,
        num_products: products,
        ..MarketConfig::default()
    };
    let sim = simulate(&config, seed, 1).unwrap();
    let split = leave_last_one_out(&sim.log.sequences());
    Market {
        log: training_log(&sim.log, &split),
        data: training_data(&split, products),
        catalog: sim.catalog,
    }
}

fn small_fit(dim: usize, epochs: usize, lr: f64) -> FitConfig {
    FitConfig {
        model: ModelConfig {
            dim,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            max_epochs: epochs,
            learning_rate: lr,
            patience: epochs,
            ..TrainConfig::default()
        },
        ..FitConfig::default()
    }
}

#[test]
fn loss_falls_over_two_hundred_epochs() {
    let m = market(50, 40, 21);
    let data = TrainingData::without_validation(40, m.data.histories.clone());
    let (_, report) = fit_arcrec(&m.catalog, &m.log, &data, &small_fit(16, 200, 0.003), 4, 1, |_| {}).unwrap();
    assert_eq!(report.curve.len(), 200);
    assert_eq!(report.best_epoch, None);
    let first = report.curve[0].loss;
    let last = report.curve[199].loss;
    assert!(last < first, "{first} -> {last}");
    assert!(report.curve.iter().all(|r| r.loss >= 0.0));
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let m = market(30, 25, 3);
    let config = small_fit(8, 2, 0.0);
    let graphs = ReferenceNetworks::build(&m.log, &m.catalog, &config.graph).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut model = ArcRec::new(config.model.clone(), &graphs.layers, m.catalog.prices(), &mut rng).unwrap();
    let before = model.params.clone();
    fit(&mut model, &m.data, &config.train, 1, &mut rng, |_| {}).unwrap();
    assert_eq!(model.params, before);
}

#[test]
fn baseline_at_zero_learning_rate_scores_like_its_initialization() {
    let m = market(30, 25, 3);
    let config = small_fit(8, 3, 0.0);
    let (trained, _) = fit_bprmf(30, &m.data, &config, 5, 1, |_| {}).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let init = BprMf::random(30, 25, 8, config.model.init_std, &mut rng);
    assert_eq!(trained, init);
    assert_eq!(
        validation_metrics(&trained, &m.data, 10, 1).unwrap(),
        validation_metrics(&init, &m.data, 10, 1).unwrap()
    );
}

#[test]
fn same_seed_gives_identical_curves_for_any_worker_count() {
    let m = market(40, 30, 8);
    let config = FitConfig {
        train: TrainConfig {
            eval_every: 2,
            ..small_fit(8, 6, 0.01).train
        },
        ..small_fit(8, 6, 0.01)
    };
    let (a, ra) = fit_arcrec(&m.catalog, &m.log, &m.data, &config, 12, 1, |_| {}).unwrap();
    let (b, rb) = fit_arcrec(&m.catalog, &m.log, &m.data, &config, 12, 3, |_| {}).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.params, b.params);
    let bits = |r: &arcrec::training::TrainingReport| r.curve.iter().map(|e| e.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&ra), bits(&rb));
    let (_, rc) = fit_arcrec(&m.catalog, &m.log, &m.data, &config, 13, 1, |_| {}).unwrap();
    assert_ne!(bits(&ra), bits(&rc));
}

fn triplet_loss(model: &ArcRec, triplet: Triplet, data: &TrainingData) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = model.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
    let (pos, neg) = model.triplet_utilities(&mut tape, &vars, &[triplet], data).unwrap();
    let loss = bpr_loss(&mut tape, pos, neg, &vars, 0.0).unwrap();
    let value = tape.value(loss).item().unwrap();
    let mut grads = tape.backward(loss).unwrap();
    let shapes: Vec<(usize, usize)> = model.tensors().iter().map(|t| t.shape()).collect();
    let grads = vars.iter().zip(shapes).map(|(&v, s)| grads.take_or_zeros(v, s)).collect();
    (value, grads)
}

#[test]
fn one_small_adam_step_lowers_the_triplet_loss() {
    let m = market(30, 25, 14);
    let config = small_fit(6, 1, 1e-4);
    let graphs = ReferenceNetworks::build(&m.log, &m.catalog, &config.graph).unwrap();
    let sampler = TripletSampler::new(&m.data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..25 {
        let mut model = ArcRec::new(config.model.clone(), &graphs.layers, m.catalog.prices(), &mut rng).unwrap();
        let triplet = sampler.sample(&mut rng, 1)[0];
        let (before, grads) = triplet_loss(&model, triplet, &m.data);
        let mut adam = AdamState::new(
            AdamConfig {
                learning_rate: 1e-4,
                ..AdamConfig::default()
            },
            model.tensors(),
        );
        adam.step(model.tensors_mut(), &grads).unwrap();
        let (after, _) = triplet_loss(&model, triplet, &m.data);
        assert!(after < before, "{before} -> {after}");
    }
}

#[test]
fn equal_prices_train_on_interest_alone() {
    let m = market(40, 30, 2);
    let rows = m
        .catalog
        .products()
        .iter()
        .map(|p| RawProduct {
            id: p.id.clone(),
            price: 2.5,
            values: p.values.clone(),
        })
        .collect();
    let flat = Catalog::new(
        m.catalog.attribute_names().to_vec(),
        m.catalog.attribute_kinds().to_vec(),
        rows,
    )
    .unwrap();
    let data = TrainingData::without_validation(30, m.data.histories.clone());
    let (_, report) = fit_arcrec(&flat, &m.log, &data, &small_fit(8, 30, 0.01), 1, 1, |_| {}).unwrap();
    assert!(report.curve[29].loss < report.curve[0].loss);
}

#[test]
fn negatives_are_uniform_over_unbought_products() {
    let histories = vec![vec![0, 3, 3, 7], vec![1, 2]];
    let data = TrainingData::without_validation(12, histories);
    let sampler = TripletSampler::new(&data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draws = sampler.sample(&mut rng, 90_000);
    let unbought: Vec<usize> = (0..12).filter(|i| ![0, 3, 7].contains(i)).collect();
    let mut counts = [0f64; 12];
    let mut total = 0.0;
    for t in draws.iter().filter(|t| t.consumer == 0) {
        assert!(unbought.contains(&t.negative));
        assert!([0, 3, 7].contains(&t.positive));
        counts[t.negative] += 1.0;
        total += 1.0;
    }
    let expected = total / unbought.len() as f64;
    let chi2: f64 = unbought.iter().map(|&i| (counts[i] - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((unbought.len() - 1) as f64).unwrap();
    let p = 1.0 - dist.cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
    let share = total / draws.len() as f64;
    assert!((share - 0.5).abs() < 0.01, "{share}");
}

proptest! {
    #[test]
    fn bpr_terms_are_non_negative(d in -700.0f64..700.0) {
        prop_assert!(bpr_term(d) >= 0.0);
        prop_assert!(bpr_term(d).is_finite());
    }

    #[test]
    fn taped_loss_is_non_negative(pos in prop::collection::vec(-30.0f64..30.0, 1..8), shift in -30.0f64..30.0, l2 in 0.0f64..1.0) {
        let mut tape = Tape::new();
        let n = pos.len();
        let p = tape.param(Matrix::from_vec(n, 1, pos.clone()).unwrap());
        let q = tape.param(Matrix::from_vec(n, 1, pos.iter().map(|v| v + shift).collect()).unwrap());
        let loss = bpr_loss(&mut tape, p, q, &[p, q], l2).unwrap();
        prop_assert!(tape.value(loss).item().unwrap() >= 0.0);
    }
}

#[test]
fn sampler_never_draws_a_purchased_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let n = rng.random_range(3..15);
        let histories: Vec<Vec<usize>> = (0..rng.random_range(1..6))
            .map(|_| (0..rng.random_range(2..6)).map(|_| rng.random_range(0..n)).collect())
            .collect();
        let data = TrainingData::without_validation(n, histories.clone());
        let Ok(sampler) = TripletSampler::new(&data) else {
            continue;
        };
        for t in sampler.sample(&mut rng, 200) {
            assert!(histories[t.consumer].contains(&t.positive));
            assert!(!histories[t.consumer].contains(&t.negative));
        }
    }
}
