use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Catalog, Product, TransactionLog};

/// Symmetric, loop-free weighted adjacency over a fixed node set.
/// Neighbor lists are sorted by node index.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Adjacency {
    pub fn empty(nodes: usize) -> Self {
        Adjacency {
            neighbors: vec![Vec::new(); nodes],
        }
    }

    /// Builds from undirected edges; duplicates are summed, self-loops dropped.
    pub fn from_edges(nodes: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in edges {
            if i == j {
                continue;
            }
            *merged.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
        }
        let mut neighbors = vec![Vec::new(); nodes];
        for (&(i, j), &w) in &merged {
            neighbors[i].push((j, w));
            neighbors[j].push((i, w));
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(j, _)| j);
        }
        Adjacency { neighbors }
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// `|N_i|`.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Sum of incident edge weights.
    pub fn weighted_degree(&self, i: usize) -> f64 {
        self.neighbors[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search_by_key(&j, |&(n, _)| n).is_ok()
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .filter(move |&&(j, _)| i < j)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges().count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeighting {
    /// Every co-purchase edge has weight 1.
    #[default]
    Binary,
    /// Weight = number of consumers who bought both products.
    Frequency,
}

/// Half-open `[start, end)` timestamp window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: i64,
    pub end: i64,
}

/// Links every pair of products co-purchased by at least one consumer
/// inside the window.
pub fn build_reference_network(
    log: &TransactionLog,
    num_products: usize,
    window: Option<TimeWindow>,
    weighting: EdgeWeighting,
) -> Result<Adjacency> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut baskets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); log.num_consumers()];
    let mut any = false;
    for r in log.records() {
        if window.is_some_and(|w| r.timestamp < w.start || r.timestamp >= w.end) {
            continue;
        }
        if r.product >= num_products {
            return Err(Error::UnknownProduct(format!("#{}", r.product)));
        }
        baskets[r.consumer].insert(r.product);
        any = true;
    }
    if !any {
        let w = window.expect("non-empty log with no window always has records");
        return Err(Error::EmptyWindow {
            start: w.start,
            end: w.end,
        });
    }
    let mut counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for basket in &baskets {
        let items: Vec<usize> = basket.iter().copied().collect();
        for (a, &i) in items.iter().enumerate() {
            for &j in &items[a + 1..] {
                *counts.entry((i, j)).or_insert(0.0) += 1.0;
            }
        }
    }
    Ok(Adjacency::from_edges(
        num_products,
        counts.into_iter().map(|((i, j), c)| {
            let w = match weighting {
                EdgeWeighting::Binary => 1.0,
                EdgeWeighting::Frequency => c,
            };
            (i, j, w)
        }),
    ))
}

/// Keeps the edges of `raw` whose endpoints share attribute `k`'s level.
/// `k` is zero-based.
pub fn decompose_arn(raw: &Adjacency, catalog: &Catalog, k: usize) -> Result<Adjacency> {
    if k >= catalog.num_attributes() {
        return Err(Error::AttributeOutOfRange {
            index: k,
            count: catalog.num_attributes(),
        });
    }
    let level = |i: usize| catalog.product(i).levels[k];
    Ok(Adjacency::from_edges(
        raw.num_nodes(),
        raw.edges().filter(|&(i, j, _)| level(i) == level(j)),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub window: Option<TimeWindow>,
    pub weighting: EdgeWeighting,
    /// When false every layer is the raw reference network.
    pub decompose_by_attribute: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            window: None,
            weighting: EdgeWeighting::Binary,
            decompose_by_attribute: true,
        }
    }
}

/// The raw reference network plus one attributed layer per attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceNetworks {
    pub raw: Adjacency,
    pub layers: Vec<Adjacency>,
}

impl ReferenceNetworks {
    pub fn build(log: &TransactionLog, catalog: &Catalog, config: &GraphConfig) -> Result<Self> {
        let raw = build_reference_network(log, catalog.len(), config.window, config.weighting)?;
        let layers = (0..catalog.num_attributes())
            .map(|k| {
                if config.decompose_by_attribute {
                    decompose_arn(&raw, catalog, k)
                } else {
                    Ok(raw.clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReferenceNetworks { raw, layers })
    }

    pub fn num_nodes(&self) -> usize {
        self.raw.num_nodes()
    }
}

/// Neighbor sets of a product outside the graph: in layer `k`, every
/// catalog product sharing its attribute-`k` level, regardless of
/// co-purchases. An empty set means the level is unseen in the catalog.
pub fn attach_cold_node(catalog: &Catalog, cold: &Product) -> Result<Vec<Vec<usize>>> {
    if cold.levels.len() != catalog.num_attributes() {
        return Err(Error::AttributeCount {
            id: cold.id.clone(),
            expected: catalog.num_attributes(),
            got: cold.levels.len(),
        });
    }
    if catalog.lookup(&cold.id).is_some() {
        return Err(Error::Config(format!(
            "cold product `{}` is already a graph node",
            cold.id
        )));
    }
    Ok((0..catalog.num_attributes())
        .map(|k| {
            catalog
                .products()
                .iter()
                .enumerate()
                .filter(|(_, p)| p.levels[k] == cold.levels[k])
                .map(|(i, _)| i)
                .collect()
        })
        .collect())
}
