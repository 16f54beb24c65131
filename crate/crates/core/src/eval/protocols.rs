use serde::Serialize;

use crate::error::{Error, Result};
use crate::parallel::par_map;

use super::{hit_at, kendall_tau, ndcg_at, position_of, rank_by_scores, spearman_rho, Recommender, Split};

/// Products in descending predicted utility for one consumer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedList {
    pub consumer: usize,
    pub products: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Scores `candidates` and sorts them, ties by ascending product index.
pub fn rank_candidates<R: Recommender + ?Sized>(
    ranker: &R,
    consumer: usize,
    history: &[usize],
    candidates: &[usize],
) -> Result<RankedList> {
    let scores = ranker.scores(consumer, history, candidates, None)?;
    let products = rank_by_scores(candidates, &scores);
    let by_index: std::collections::HashMap<usize, f64> =
        candidates.iter().copied().zip(scores.iter().copied()).collect();
    let scores = products.iter().map(|p| by_index[p]).collect();
    Ok(RankedList {
        consumer,
        products,
        scores,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub kendall_tau: f64,
    pub spearman_rho: f64,
    pub consumers: usize,
    /// Consumers left out because no reference set could be formed.
    pub skipped: usize,
}

/// Ranks the full assortment for each consumer given `histories` and
/// compares it with `truth` (one full ranking per consumer). Returns mean
/// Kendall's tau and Spearman's rho over consumers.
pub fn correlation_protocol<R: Recommender + Sync>(
    ranker: &R,
    histories: &[Vec<usize>],
    truth: &[Vec<usize>],
    num_products: usize,
    workers: usize,
) -> Result<CorrelationReport> {
    if histories.len() != truth.len() {
        return Err(Error::SizeMismatch {
            left: histories.len(),
            right: truth.len(),
        });
    }
    let all: Vec<usize> = (0..num_products).collect();
    let consumers: Vec<usize> = (0..histories.len()).filter(|&u| !histories[u].is_empty()).collect();
    let results = par_map(&consumers, workers, |&u| -> Result<Option<(f64, f64)>> {
        let ranked = match rank_candidates(ranker, u, &histories[u], &all) {
            Ok(r) => r,
            Err(Error::EmptyReferenceSet(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        Ok(Some((
            kendall_tau(&truth[u], &ranked.products)?,
            spearman_rho(&truth[u], &ranked.products)?,
        )))
    });
    let mut tau = 0.0;
    let mut rho = 0.0;
    let mut n = 0;
    for r in results {
        if let Some((t, s)) = r? {
            tau += t;
            rho += s;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData("no consumer could be ranked".into()));
    }
    Ok(CorrelationReport {
        kendall_tau: tau / n as f64,
        spearman_rho: rho / n as f64,
        consumers: n,
        skipped: histories.len() - n,
    })
}

/// HR@K and nDCG@K at several cutoffs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopKReport {
    pub ks: Vec<usize>,
    pub hit_ratio: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub consumers: usize,
    pub skipped: usize,
}

impl TopKReport {
    /// Aggregates 1-based hit positions.
    pub fn from_positions(positions: &[usize], ks: &[usize], skipped: usize) -> Self {
        let n = positions.len().max(1) as f64;
        TopKReport {
            ks: ks.to_vec(),
            hit_ratio: ks
                .iter()
                .map(|&k| positions.iter().map(|&p| hit_at(p, k)).sum::<f64>() / n)
                .collect(),
            ndcg: ks
                .iter()
                .map(|&k| positions.iter().map(|&p| ndcg_at(p, k)).sum::<f64>() / n)
                .collect(),
            consumers: positions.len(),
            skipped,
        }
    }

    pub fn hit_ratio_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.hit_ratio[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }
}

/// Ranks each consumer's held-out test item among every product outside
/// their history, which is the training part plus the validation item.
pub fn leave_last_one_out_protocol<R: Recommender + Sync>(
    ranker: &R,
    split: &Split,
    num_products: usize,
    ks: &[usize],
    workers: usize,
) -> Result<TopKReport> {
    let consumers: Vec<usize> = (0..split.test.len())
        .filter(|&u| split.test[u].is_some())
        .collect();
    let results = par_map(&consumers, workers, |&u| -> Result<Option<usize>> {
        let target = split.test[u].expect("filtered");
        let history = split.test_history(u);
        let candidates = split.test_candidates(u, num_products);
        match rank_candidates(ranker, u, &history, &candidates) {
            Ok(r) => Ok(position_of(&r.products, target)),
            Err(Error::EmptyReferenceSet(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut positions = Vec::with_capacity(consumers.len());
    for r in results {
        positions.extend(r?);
    }
    if positions.is_empty() {
        return Err(Error::InsufficientData("no consumer has a test item".into()));
    }
    let skipped = consumers.len() - positions.len();
    Ok(TopKReport::from_positions(&positions, ks, skipped))
}
