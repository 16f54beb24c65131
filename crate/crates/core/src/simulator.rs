//! Synthetic markets: categorical attributes, exp-normal prices, consumers
//! with attribute-value preferences and a negative price sensitivity, a
//! sticker-shock utility against a running reference price, and
//! multinomial-logit choices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{AttributeKind, Catalog, Purchase, RawProduct, TransactionLog};
use crate::numeric::softmax;
use crate::parallel::par_map;

/// Sign convention of the sticker-shock term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StickerShock {
    /// `β·(p_ref − p_i)` with `β < 0`: paying above the reference price
    /// raises utility.
    AsWritten,
    /// `β·(p_i − p_ref)` with `β < 0`: paying above the reference price
    /// lowers utility.
    #[default]
    PriceAverse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketConfig {
    pub num_consumers: usize,
    pub num_products: usize,
    /// Draw both sizes from U(1000, 2000) instead.
    pub full_scale: bool,
    pub num_attributes: usize,
    /// Inclusive range of value counts per attribute.
    pub min_levels: usize,
    pub max_levels: usize,
    /// Inclusive range of active periods per consumer.
    pub min_periods: usize,
    pub max_periods: usize,
    /// Variance of the utility noise.
    pub noise_variance: f64,
    pub sticker_shock: StickerShock,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            num_consumers: 300,
            num_products: 300,
            full_scale: false,
            num_attributes: 3,
            min_levels: 3,
            max_levels: 15,
            min_periods: 5,
            max_periods: 25,
            noise_variance: 0.05,
            sticker_shock: StickerShock::PriceAverse,
        }
    }
}

impl MarketConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.num_consumers == 0, "num_consumers must be positive"),
            (self.num_products == 0, "num_products must be positive"),
            (self.num_attributes == 0, "num_attributes must be positive"),
            (
                self.min_levels == 0 || self.min_levels > self.max_levels,
                "level range must satisfy 0 < min_levels <= max_levels",
            ),
            (
                self.min_periods == 0 || self.min_periods > self.max_periods,
                "period range must satisfy 0 < min_periods <= max_periods",
            ),
            (
                !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()),
                "noise_variance must be non-negative",
            ),
        ];
        match checks.iter().find(|(bad, _)| *bad) {
            Some((_, message)) => Err(Error::Config(format!("simulate.{message}"))),
            None => Ok(()),
        }
    }
}

/// A generated market. Attribute values are indices into each attribute's
/// value set; preferences are stored per attribute per value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimMarket {
    pub config: MarketConfig,
    /// Number of values of each attribute.
    pub levels: Vec<usize>,
    /// `values[i][n]`: value of attribute `n` for product `i`.
    pub values: Vec<Vec<usize>>,
    pub prices: Vec<f64>,
    /// `preferences[u][n][v]`: coefficient of value `v` of attribute `n`.
    pub preferences: Vec<Vec<Vec<f64>>>,
    /// Price sensitivity, always negative.
    pub sensitivity: Vec<f64>,
    pub periods: Vec<usize>,
}

impl SimMarket {
    pub fn num_consumers(&self) -> usize {
        self.sensitivity.len()
    }

    pub fn num_products(&self) -> usize {
        self.prices.len()
    }

    pub fn mean_price(&self) -> f64 {
        self.prices.iter().sum::<f64>() / self.prices.len() as f64
    }

    pub fn consumer_id(&self, u: usize) -> String {
        format!("u{:0width$}", u, width = digits(self.num_consumers()))
    }

    pub fn product_id(&self, i: usize) -> String {
        format!("p{:0width$}", i, width = digits(self.num_products()))
    }

    /// Catalog with attributes `a1..aK` and values `v<index>`.
    pub fn catalog(&self) -> Result<Catalog> {
        let names = (1..=self.levels.len()).map(|n| format!("a{n}")).collect();
        let kinds = vec![AttributeKind::Categorical; self.levels.len()];
        let rows = (0..self.num_products())
            .map(|i| RawProduct {
                id: self.product_id(i),
                price: self.prices[i],
                values: self.values[i].iter().map(|v| format!("v{v}")).collect(),
            })
            .collect();
        Catalog::new(names, kinds, rows)
    }

    /// Noise-free utility of product `i` for consumer `u` at reference price
    /// `reference_price`.
    pub fn utility(&self, u: usize, i: usize, reference_price: f64) -> f64 {
        self.utility_at_price(u, i, self.prices[i], reference_price)
    }

    /// As [`SimMarket::utility`] with the product offered at `price`.
    pub fn utility_at_price(&self, u: usize, i: usize, price: f64, reference_price: f64) -> f64 {
        let taste: f64 = self.values[i]
            .iter()
            .enumerate()
            .map(|(n, &v)| self.preferences[u][n][v])
            .sum();
        taste + sticker_shock(self.config.sticker_shock, self.sensitivity[u], reference_price, price)
    }
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

/// The sticker-shock term for sensitivity `beta`.
pub fn sticker_shock(orientation: StickerShock, beta: f64, reference_price: f64, price: f64) -> f64 {
    match orientation {
        StickerShock::AsWritten => beta * (reference_price - price),
        StickerShock::PriceAverse => beta * (price - reference_price),
    }
}

/// Draws a market from `seed`. All market draws come from stream 0 of the
/// seeded generator; consumer histories use later streams.
pub fn generate_market(config: &MarketConfig, seed: u64) -> Result<SimMarket> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (num_consumers, num_products) = if config.full_scale {
        (rng.random_range(1000..=2000), rng.random_range(1000..=2000))
    } else {
        (config.num_consumers, config.num_products)
    };
    let levels: Vec<usize> = (0..config.num_attributes)
        .map(|_| rng.random_range(config.min_levels..=config.max_levels))
        .collect();
    let mut values = Vec::with_capacity(num_products);
    let mut prices = Vec::with_capacity(num_products);
    for _ in 0..num_products {
        values.push(levels.iter().map(|&l| rng.random_range(0..l)).collect());
        let z: f64 = rng.sample(StandardNormal);
        prices.push(z.exp());
    }
    let mut preferences = Vec::with_capacity(num_consumers);
    let mut sensitivity = Vec::with_capacity(num_consumers);
    let mut periods = Vec::with_capacity(num_consumers);
    for _ in 0..num_consumers {
        preferences.push(
            levels
                .iter()
                .map(|&l| (0..l).map(|_| rng.sample(StandardNormal)).collect())
                .collect(),
        );
        let g: f64 = rng.sample(StandardNormal);
        sensitivity.push(-g.exp());
        periods.push(rng.random_range(config.min_periods..=config.max_periods));
    }
    Ok(SimMarket {
        config: config.clone(),
        levels,
        values,
        prices,
        preferences,
        sensitivity,
        periods,
    })
}

/// Multinomial-logit choice probabilities over the full assortment.
pub fn choice_probabilities(utilities: &[f64]) -> Vec<f64> {
    softmax(utilities)
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_choice(probabilities: &[f64], rng: &mut impl Rng) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    probabilities.len() - 1
}

/// One consumer's simulated history.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumerHistory {
    /// Purchased product per active period.
    pub purchases: Vec<usize>,
    /// Reference price in effect at each active period, then at the test
    /// period.
    pub reference_prices: Vec<f64>,
    /// Noise-free test-period utilities over the assortment.
    pub true_utility: Vec<f64>,
    pub true_prob: Vec<f64>,
}

impl ConsumerHistory {
    /// Products ordered by descending true utility, ties by index.
    pub fn true_ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.true_utility.len()).collect();
        order.sort_by(|&a, &b| self.true_utility[b].total_cmp(&self.true_utility[a]).then(a.cmp(&b)));
        order
    }
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub market: SimMarket,
    pub catalog: Catalog,
    pub log: TransactionLog,
    pub histories: Vec<ConsumerHistory>,
}

fn simulate_consumer(market: &SimMarket, u: usize, seed: u64) -> ConsumerHistory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u as u64 + 1);
    let noise = Normal::new(0.0, market.config.noise_variance.sqrt()).expect("valid variance");
    let mut reference = market.mean_price();
    let mut spent = 0.0;
    let mut purchases = Vec::with_capacity(market.periods[u]);
    let mut reference_prices = Vec::with_capacity(market.periods[u] + 1);
    for _ in 0..market.periods[u] {
        reference_prices.push(reference);
        let utilities: Vec<f64> = (0..market.num_products())
            .map(|i| market.utility(u, i, reference) + noise.sample(&mut rng))
            .collect();
        let choice = sample_choice(&choice_probabilities(&utilities), &mut rng);
        purchases.push(choice);
        spent += market.prices[choice];
        reference = spent / purchases.len() as f64;
    }
    reference_prices.push(reference);
    let true_utility: Vec<f64> = (0..market.num_products())
        .map(|i| market.utility(u, i, reference))
        .collect();
    let true_prob = choice_probabilities(&true_utility);
    ConsumerHistory {
        purchases,
        reference_prices,
        true_utility,
        true_prob,
    }
}

/// Simulates every consumer's active periods plus a noise-free test
/// period. Period `t` of any consumer is recorded at timestamp `t`.
pub fn simulate_periods(market: &SimMarket, seed: u64, workers: usize) -> Result<Simulation> {
    let consumers: Vec<usize> = (0..market.num_consumers()).collect();
    let histories = par_map(&consumers, workers, |&u| simulate_consumer(market, u, seed));
    let catalog = market.catalog()?;
    let consumer_ids: Vec<String> = consumers.iter().map(|&u| market.consumer_id(u)).collect();
    let records = histories
        .iter()
        .enumerate()
        .flat_map(|(u, h)| {
            h.purchases.iter().enumerate().map(move |(t, &product)| Purchase {
                consumer: u,
                product,
                timestamp: t as i64,
            })
        })
        .collect();
    let log = TransactionLog::from_records(consumer_ids, records);
    Ok(Simulation {
        market: market.clone(),
        catalog,
        log,
        histories,
    })
}

/// Market plus histories from one seed.
pub fn simulate(config: &MarketConfig, seed: u64, workers: usize) -> Result<Simulation> {
    let market = generate_market(config, seed)?;
    simulate_periods(&market, seed, workers)
}
