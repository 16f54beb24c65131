//! Pairwise (BPR) training: triplet sampling, loss with L2, Adam updates and
//! early stopping on validation HR@10.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    candidates_excluding, hit_at, ndcg_at, position_of, rank_by_scores, reference_set,
    ArcRecRanker, Recommender,
};
use crate::model::{ArcRec, Batch, ModelVars, Query};
use crate::numeric::{log_sigmoid, AdamConfig, AdamState, Matrix, NumericError, Tape, Var};
use crate::parallel::par_map;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Validate every this many epochs.
    pub eval_every: usize,
    pub validation_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 500,
            learning_rate: 0.003,
            l2: 1e-4,
            max_epochs: 200,
            patience: 10,
            eval_every: 1,
            validation_k: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("eval_every", self.eval_every),
            ("validation_k", self.validation_k),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("train.{name} must be positive")));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be non-negative".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("train.l2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// Training purchases and optional validation item per consumer.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingData {
    pub num_products: usize,
    pub histories: Vec<Vec<usize>>,
    pub validation: Vec<Option<usize>>,
}

impl TrainingData {
    /// Every purchase used for training, no validation items.
    pub fn without_validation(num_products: usize, histories: Vec<Vec<usize>>) -> Self {
        let validation = vec![None; histories.len()];
        TrainingData {
            num_products,
            histories,
            validation,
        }
    }

    pub fn interactions(&self) -> usize {
        self.histories.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub consumer: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Uniform sampler over eligible consumers, their distinct purchases, and
/// the products they never bought.
#[derive(Clone, Debug)]
pub struct TripletSampler {
    eligible: Vec<usize>,
    /// Sorted distinct purchases per consumer.
    purchased: Vec<Vec<usize>>,
    num_products: usize,
}

impl TripletSampler {
    /// Consumers need two distinct purchases (so a reference set survives
    /// removing the positive) and at least one unpurchased product.
    pub fn new(data: &TrainingData) -> Result<Self> {
        let purchased: Vec<Vec<usize>> = data
            .histories
            .iter()
            .map(|h| {
                let mut p = h.clone();
                p.sort_unstable();
                p.dedup();
                p
            })
            .collect();
        let eligible: Vec<usize> = purchased
            .iter()
            .enumerate()
            .filter(|(_, p)| p.len() >= 2 && p.len() < data.num_products)
            .map(|(u, _)| u)
            .collect();
        if eligible.is_empty() {
            return Err(Error::InsufficientData(
                "no consumer has two distinct training purchases and an unpurchased product".into(),
            ));
        }
        Ok(TripletSampler {
            eligible,
            purchased,
            num_products: data.num_products,
        })
    }

    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    pub fn sample(&self, rng: &mut impl Rng, count: usize) -> Vec<Triplet> {
        (0..count)
            .map(|_| {
                let consumer = self.eligible[rng.random_range(0..self.eligible.len())];
                let bought = &self.purchased[consumer];
                let positive = bought[rng.random_range(0..bought.len())];
                let negative = loop {
                    let j = rng.random_range(0..self.num_products);
                    if bought.binary_search(&j).is_err() {
                        break j;
                    }
                };
                Triplet {
                    consumer,
                    positive,
                    negative,
                }
            })
            .collect()
    }
}

/// Per-triplet BPR term `−ln σ(r_pos − r_neg)`.
pub fn bpr_term(difference: f64) -> f64 {
    -log_sigmoid(difference)
}

/// `−Σ ln σ(r_pos − r_neg) + λ Σ‖θ‖²` on the tape.
pub fn bpr_loss(tape: &mut Tape, positive: Var, negative: Var, params: &[Var], l2: f64) -> Result<Var> {
    let diff = tape.sub(positive, negative)?;
    let log_prob = tape.log_sigmoid(diff)?;
    let total = tape.sum(log_prob)?;
    let mut loss = tape.scale(total, -1.0)?;
    if l2 > 0.0 {
        for &p in params {
            let sq = tape.dot(p, p)?;
            let sq = tape.scale(sq, l2)?;
            loss = tape.add(loss, sq)?;
        }
    }
    Ok(loss)
}

/// A model trainable with [`fit`].
pub trait Trainable {
    type Ranker: Recommender + Sync;

    fn tensors(&self) -> Vec<&Matrix>;

    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    /// Taped utilities of every triplet's positive and negative, as two
    /// `B × 1` columns. `vars` follow [`Trainable::tensors`] order.
    fn triplet_utilities(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        triplets: &[Triplet],
        data: &TrainingData,
    ) -> Result<(Var, Var)>;

    fn ranker(&self) -> Result<Self::Ranker>;
}

impl Trainable for ArcRec {
    type Ranker = ArcRecRanker;

    fn tensors(&self) -> Vec<&Matrix> {
        self.params.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.params.tensors_mut()
    }

    fn triplet_utilities(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        triplets: &[Triplet],
        data: &TrainingData,
    ) -> Result<(Var, Var)> {
        let vars = ModelVars::from_vars(vars, self.num_layers());
        let cap = self.config.reference_cap;
        let mut context_of: HashMap<usize, usize> = HashMap::new();
        let mut batch = Batch::default();
        let mut negatives = Vec::with_capacity(triplets.len());
        for t in triplets {
            let context = *context_of.entry(t.consumer).or_insert_with(|| {
                batch.contexts.push(reference_set(&data.histories[t.consumer], cap));
                batch.contexts.len() - 1
            });
            let refs: Vec<usize> = batch.contexts[context]
                .iter()
                .copied()
                .filter(|&j| j != t.positive)
                .collect();
            negatives.push(Query {
                context,
                target: t.negative,
                refs: refs.clone(),
            });
            batch.queries.push(Query {
                context,
                target: t.positive,
                refs,
            });
        }
        batch.queries.extend(negatives);
        let utilities = self.batch_utilities(tape, &vars, &batch)?;
        let b = triplets.len();
        let pos = tape.gather_rows(utilities, (0..b).collect::<Vec<_>>().into())?;
        let neg = tape.gather_rows(utilities, (b..2 * b).collect::<Vec<_>>().into())?;
        Ok((pos, neg))
    }

    fn ranker(&self) -> Result<ArcRecRanker> {
        Ok(ArcRecRanker {
            scorer: self.scorer()?,
            reference_cap: self.config.reference_cap,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per triplet, L2 included.
    pub loss: f64,
    pub val_hr10: Option<f64>,
    pub val_ndcg10: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub curve: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` without validation data.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// HR@k and nDCG@k of validation items, ranked among every product the
/// consumer has not bought in training. Consumers whose reference set
/// empties out are skipped.
pub fn validation_metrics<R: Recommender + Sync>(
    ranker: &R,
    data: &TrainingData,
    k: usize,
    workers: usize,
) -> Result<Option<(f64, f64)>> {
    let consumers: Vec<usize> = (0..data.histories.len())
        .filter(|&u| data.validation[u].is_some() && !data.histories[u].is_empty())
        .collect();
    let results = par_map(&consumers, workers, |&u| -> Result<Option<usize>> {
        let target = data.validation[u].expect("filtered");
        let history = &data.histories[u];
        let candidates = candidates_excluding(history, Some(target), data.num_products);
        match ranker.scores(u, history, &candidates, None) {
            Ok(scores) => Ok(position_of(&rank_by_scores(&candidates, &scores), target)),
            Err(Error::EmptyReferenceSet(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut hr = 0.0;
    let mut nd = 0.0;
    let mut n = 0usize;
    for r in results {
        if let Some(p) = r? {
            hr += hit_at(p, k);
            nd += ndcg_at(p, k);
            n += 1;
        }
    }
    Ok((n > 0).then(|| (hr / n as f64, nd / n as f64)))
}

fn diverged(epoch: usize, batch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(
            err @ (NumericError::NonFinite { .. } | NumericError::NonFiniteGradient),
        ) => Error::Diverged {
            epoch,
            batch,
            reason: err.to_string(),
        },
        other => other,
    }
}

/// Trains `model` in place. Each epoch draws as many triplets as there are
/// training interactions; with validation items present the parameters of
/// the best validation epoch are restored at the end.
pub fn fit<M: Trainable>(
    model: &mut M,
    data: &TrainingData,
    config: &TrainConfig,
    workers: usize,
    rng: &mut impl Rng,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainingReport> {
    config.validate()?;
    let sampler = TripletSampler::new(data)?;
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        model.tensors(),
    );
    let per_epoch = data.interactions();
    let has_validation = data.validation.iter().any(Option::is_some);
    let mut best: Option<((f64, f64), usize, Vec<Matrix>)> = None;
    let mut curve = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=config.max_epochs {
        let mut remaining = per_epoch;
        let mut total = 0.0;
        let mut batch_index = 0;
        while remaining > 0 {
            let size = remaining.min(config.batch_size);
            remaining -= size;
            let triplets = sampler.sample(rng, size);
            let wrap = diverged(epoch, batch_index);
            let mut tape = Tape::new();
            let vars: Vec<Var> = model.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
            let (pos, neg) = model
                .triplet_utilities(&mut tape, &vars, &triplets, data)
                .map_err(&wrap)?;
            let loss = bpr_loss(&mut tape, pos, neg, &vars, config.l2).map_err(&wrap)?;
            total += tape.value(loss).item()?;
            let mut grads = tape.backward(loss).map_err(|e| wrap(e.into()))?;
            let shapes: Vec<(usize, usize)> = model.tensors().iter().map(|t| t.shape()).collect();
            let grads: Vec<Matrix> = vars
                .iter()
                .zip(shapes)
                .map(|(&v, s)| grads.take_or_zeros(v, s))
                .collect();
            adam.step(model.tensors_mut(), &grads)?;
            batch_index += 1;
        }
        let mut record = EpochRecord {
            epoch,
            loss: total / per_epoch as f64,
            val_hr10: None,
            val_ndcg10: None,
        };
        if has_validation && (epoch % config.eval_every == 0 || epoch == config.max_epochs) {
            let ranker = model.ranker()?;
            if let Some((hr, nd)) = validation_metrics(&ranker, data, config.validation_k, workers)? {
                record.val_hr10 = Some(hr);
                record.val_ndcg10 = Some(nd);
                let improved = best.as_ref().is_none_or(|(score, _, _)| (hr, nd) > *score);
                if improved {
                    let snapshot = model.tensors().into_iter().cloned().collect();
                    best = Some(((hr, nd), epoch, snapshot));
                }
            }
        }
        on_epoch(&record);
        curve.push(record);
        if let Some((_, best_epoch, _)) = &best {
            if epoch - best_epoch >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    let best_epoch = best.map(|(_, epoch, snapshot)| {
        for (t, s) in model.tensors_mut().into_iter().zip(snapshot) {
            *t = s;
        }
        epoch
    });
    Ok(TrainingReport {
        curve,
        best_epoch,
        stopped_early,
    })
}
