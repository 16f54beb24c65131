use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphs::{attach_cold_node, Catalog, Product, TransactionLog};
use crate::model::Scorer;
use crate::parallel::par_map;
use crate::propagation::cold_embedding;

use super::{position_of, rank_by_scores, reference_set, TopKReport};

/// A catalog and log with a random subset of products removed.
#[derive(Clone, Debug)]
pub struct ColdSplit {
    /// Original indices of the held-out products, ascending.
    pub cold: Vec<usize>,
    pub cold_products: Vec<Product>,
    pub warm_catalog: Catalog,
    /// The log restricted to warm products, re-indexed.
    pub warm_log: TransactionLog,
    /// Original purchase sequences, unchanged.
    pub sequences: Vec<Vec<usize>>,
    /// Original index to warm index.
    pub warm_index: Vec<Option<usize>>,
}

/// Holds out `round(fraction · |V|)` products chosen uniformly.
pub fn hold_out_products(
    catalog: &Catalog,
    log: &TransactionLog,
    fraction: f64,
    rng: &mut impl Rng,
) -> Result<ColdSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "cold-start holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = catalog.len();
    let count = (fraction * n as f64).round() as usize;
    if count == 0 || count >= n {
        return Err(Error::InsufficientData(format!(
            "holdout fraction {fraction} of {n} products leaves no cold or no warm products"
        )));
    }
    let mut cold = sample(rng, n, count).into_vec();
    cold.sort_unstable();
    split_products(catalog, log, &cold)
}

/// Removes the products at `cold` (original indices).
pub fn split_products(catalog: &Catalog, log: &TransactionLog, cold: &[usize]) -> Result<ColdSplit> {
    let excluded: BTreeSet<usize> = cold.iter().copied().collect();
    if excluded.is_empty() {
        return Err(Error::InsufficientData("cold product set is empty".into()));
    }
    let (warm_catalog, cold_products) = catalog.split_off(&excluded)?;
    let mut next = 0;
    let warm_index: Vec<Option<usize>> = (0..catalog.len())
        .map(|i| {
            (!excluded.contains(&i)).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    let warm_log = log.filter_products(|i| warm_index[i]);
    Ok(ColdSplit {
        cold: excluded.into_iter().collect(),
        cold_products,
        warm_catalog,
        warm_log,
        sequences: log.sequences(),
        warm_index,
    })
}

/// One cold-start query: the consumer's last cold purchase, with their
/// warm purchases before it (warm indices) as history.
#[derive(Clone, Debug, PartialEq)]
pub struct ColdQuery {
    pub consumer: usize,
    /// Position of the target in `ColdSplit::cold`.
    pub target: usize,
    pub history: Vec<usize>,
}

impl ColdSplit {
    pub fn queries(&self) -> Vec<ColdQuery> {
        let slot = |i: usize| self.cold.binary_search(&i).ok();
        self.sequences
            .iter()
            .enumerate()
            .filter_map(|(u, seq)| {
                let at = seq.iter().rposition(|&i| slot(i).is_some())?;
                let history = seq[..at].iter().filter_map(|&i| self.warm_index[i]).collect();
                Some(ColdQuery {
                    consumer: u,
                    target: slot(seq[at]).expect("cold"),
                    history,
                })
            })
            .collect()
    }

    /// Attaches every cold product to `scorer` (trained on the warm
    /// catalog) and returns their new indices in `cold` order.
    pub fn attach(&self, scorer: &mut Scorer) -> Result<Vec<usize>> {
        let k = self.warm_catalog.num_attributes();
        let mut added = Vec::with_capacity(self.cold_products.len());
        for product in &self.cold_products {
            let per_attribute = attach_cold_node(&self.warm_catalog, product)?;
            let neighbors: Vec<Vec<usize>> = if scorer.num_layers() == k {
                per_attribute
            } else {
                let union: BTreeSet<usize> = per_attribute.into_iter().flatten().collect();
                vec![union.into_iter().collect(); scorer.num_layers()]
            };
            let rows: Vec<Vec<f64>> = scorer
                .layers()
                .iter()
                .zip(&neighbors)
                .map(|(table, n)| cold_embedding(n, table))
                .collect();
            added.push(scorer.add_product(&rows, product.price));
        }
        Ok(added)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColdStartReport {
    pub cold_products: usize,
    pub metrics: TopKReport,
    /// Expected HR@K of a uniformly random ranking.
    pub random_hit_ratio: Vec<f64>,
}

/// Ranks each affected consumer's last cold purchase among all cold
/// products, using their earlier warm purchases as references.
pub fn cold_start_protocol(
    scorer: &Scorer,
    split: &ColdSplit,
    reference_cap: usize,
    ks: &[usize],
    workers: usize,
) -> Result<ColdStartReport> {
    let mut scorer = scorer.clone();
    let cold_nodes = split.attach(&mut scorer)?;
    let queries = split.queries();
    if queries.is_empty() {
        return Err(Error::InsufficientData(
            "no consumer purchased a held-out product".into(),
        ));
    }
    let results = par_map(&queries, workers, |q| -> Result<Option<usize>> {
        let refs = reference_set(&q.history, reference_cap);
        if refs.is_empty() {
            return Ok(None);
        }
        let weights = scorer.attribute_weights(&refs)?;
        let scores = scorer.score(&weights, &refs, &cold_nodes, None)?;
        Ok(position_of(&rank_by_scores(&cold_nodes, &scores), cold_nodes[q.target]))
    });
    let mut positions = Vec::with_capacity(queries.len());
    for r in results {
        positions.extend(r?);
    }
    if positions.is_empty() {
        return Err(Error::InsufficientData(
            "no cold-start consumer has an earlier warm purchase".into(),
        ));
    }
    let skipped = queries.len() - positions.len();
    let n = cold_nodes.len() as f64;
    Ok(ColdStartReport {
        cold_products: cold_nodes.len(),
        metrics: TopKReport::from_positions(&positions, ks, skipped),
        random_hit_ratio: ks.iter().map(|&k| (k as f64 / n).min(1.0)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graphs::{AttributeKind, RawProduct};

    fn fixture() -> (Catalog, TransactionLog) {
        let rows = (0..6)
            .map(|i| RawProduct {
                id: format!("p{i}"),
                price: 1.0 + i as f64,
                values: vec![format!("v{}", i % 2)],
            })
            .collect();
        let catalog = Catalog::new(vec!["a".into()], vec![AttributeKind::Categorical], rows).unwrap();
        let rows = [("u0", "p0", 0), ("u0", "p3", 1), ("u0", "p1", 2), ("u1", "p2", 0), ("u1", "p4", 1)];
        let log = TransactionLog::from_rows(&rows, &catalog).unwrap();
        (catalog, log)
    }

    #[test]
    fn zero_fraction_refused() {
        let (c, l) = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(hold_out_products(&c, &l, 0.0, &mut rng), Err(Error::Config(_))));
        assert!(matches!(hold_out_products(&c, &l, 0.01, &mut rng), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn queries_use_warm_purchases_before_the_target() {
        let (c, l) = fixture();
        let split = split_products(&c, &l, &[3, 4]).unwrap();
        assert_eq!(split.warm_log.len(), 3);
        let q = split.queries();
        assert_eq!(q.len(), 2);
        assert_eq!((q[0].consumer, q[0].target, q[0].history.clone()), (0, 0, vec![0]));
        assert_eq!((q[1].consumer, q[1].target, q[1].history.clone()), (1, 1, vec![2]));
    }
}
