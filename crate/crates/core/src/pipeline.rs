//! Glue between a catalog plus log and a trained model: graph building
//! from training purchases, training-data assembly, and seeded fits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{BprMf, Split};
use crate::graphs::{Catalog, GraphConfig, Purchase, ReferenceNetworks, TransactionLog};
use crate::model::{ArcRec, ModelConfig};
use crate::training::{fit, EpochRecord, TrainConfig, TrainingData, TrainingReport};

/// The log restricted to each consumer's training purchases.
pub fn training_log(log: &TransactionLog, split: &Split) -> TransactionLog {
    let mut seen = vec![0usize; log.num_consumers()];
    let records: Vec<Purchase> = log
        .records()
        .iter()
        .filter(|r| {
            seen[r.consumer] += 1;
            seen[r.consumer] <= split.train[r.consumer].len()
        })
        .copied()
        .collect();
    TransactionLog::from_records(log.consumers().to_vec(), records)
}

/// Training histories plus validation items from a split.
pub fn training_data(split: &Split, num_products: usize) -> TrainingData {
    TrainingData {
        num_products,
        histories: split.train.clone(),
        validation: split.validation.clone(),
    }
}

/// Graph settings consistent with the model's ablation flags.
pub fn graph_config_for(model: &ModelConfig, graph: &GraphConfig) -> GraphConfig {
    GraphConfig {
        decompose_by_attribute: model.ablation.decompose_by_attribute,
        ..graph.clone()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub graph: GraphConfig,
}

/// Builds graphs from `log` (training purchases only), initializes ArcRec
/// from `seed` and trains it on `data`.
pub fn fit_arcrec(
    catalog: &Catalog,
    log: &TransactionLog,
    data: &TrainingData,
    config: &FitConfig,
    seed: u64,
    workers: usize,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ArcRec, TrainingReport)> {
    let graphs = ReferenceNetworks::build(log, catalog, &graph_config_for(&config.model, &config.graph))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ArcRec::new(config.model.clone(), &graphs.layers, catalog.prices(), &mut rng)?;
    let report = fit(&mut model, data, &config.train, workers, &mut rng, on_epoch)?;
    Ok((model, report))
}

/// BPR-MF with the same dimension, initialization scale, loss and
/// optimizer settings.
pub fn fit_bprmf(
    num_consumers: usize,
    data: &TrainingData,
    config: &FitConfig,
    seed: u64,
    workers: usize,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(BprMf, TrainingReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = BprMf::random(
        num_consumers,
        data.num_products,
        config.model.dim,
        config.model.init_std,
        &mut rng,
    );
    let report = fit(&mut model, data, &config.train, workers, &mut rng, on_epoch)?;
    Ok((model, report))
}
