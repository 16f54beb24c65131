use std::collections::{BTreeSet, HashMap};

use crate::error::Result;

use super::Catalog;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Purchase {
    pub consumer: usize,
    pub product: usize,
    /// Integer seconds.
    pub timestamp: i64,
}

/// Time-ordered purchases with ids resolved against a catalog.
///
/// Consumers are indexed by the sorted order of their ids; records are
/// sorted stably by `(timestamp, consumer)`, so any permutation of the same
/// rows produces the same log unless a consumer has two purchases with the
/// same timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct TransactionLog {
    consumers: Vec<String>,
    records: Vec<Purchase>,
}

impl TransactionLog {
    pub fn from_rows<S: AsRef<str>>(rows: &[(S, S, i64)], catalog: &Catalog) -> Result<Self> {
        let ids: BTreeSet<&str> = rows.iter().map(|r| r.0.as_ref()).collect();
        let consumers: Vec<String> = ids.into_iter().map(str::to_string).collect();
        let position: HashMap<&str, usize> = consumers
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let records = rows
            .iter()
            .map(|(c, p, t)| {
                Ok(Purchase {
                    consumer: position[c.as_ref()],
                    product: catalog.resolve(p.as_ref())?,
                    timestamp: *t,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_records(consumers, records))
    }

    pub fn from_records(consumers: Vec<String>, mut records: Vec<Purchase>) -> Self {
        records.sort_by_key(|r| (r.timestamp, r.consumer));
        TransactionLog { consumers, records }
    }

    pub fn consumers(&self) -> &[String] {
        &self.consumers
    }

    pub fn num_consumers(&self) -> usize {
        self.consumers.len()
    }

    pub fn records(&self) -> &[Purchase] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn consumer_index(&self, id: &str) -> Option<usize> {
        self.consumers.binary_search_by(|c| c.as_str().cmp(id)).ok()
    }

    /// Per consumer, purchased product indices in time order (repeats kept).
    pub fn sequences(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.consumers.len()];
        for r in &self.records {
            out[r.consumer].push(r.product);
        }
        out
    }

    /// Keeps the records for which `remap` returns a new product index. Consumers left without purchases remain
    /// indexed but have empty sequences.
    pub fn filter_products(&self, remap: impl Fn(usize) -> Option<usize>) -> TransactionLog {
        let records = self
            .records
            .iter()
            .filter_map(|r| {
                remap(r.product).map(|product| Purchase {
                    product,
                    ..*r
                })
            })
            .collect();
        TransactionLog {
            consumers: self.consumers.clone(),
            records,
        }
    }
}

/// Distinct products of a purchase sequence, ordered by their last
/// occurrence; the final element is the most recent purchase.
pub fn distinct_recent(sequence: &[usize]) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    let mut out: Vec<usize> = sequence
        .iter()
        .rev()
        .filter(|p| seen.insert(**p))
        .copied()
        .collect();
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::graphs::{AttributeKind, RawProduct};

    fn catalog() -> Catalog {
        let rows = ["A", "B", "C"]
            .iter()
            .map(|id| RawProduct {
                id: id.to_string(),
                price: 1.0,
                values: vec!["x".into()],
            })
            .collect();
        Catalog::new(vec!["k".into()], vec![AttributeKind::Categorical], rows).unwrap()
    }

    #[test]
    fn unknown_product_is_an_error() {
        let r = TransactionLog::from_rows(&[("u", "Z", 0)], &catalog());
        assert!(matches!(r, Err(Error::UnknownProduct(id)) if id == "Z"));
    }

    #[test]
    fn records_sorted_by_time() {
        let log = TransactionLog::from_rows(&[("v", "A", 5), ("u", "B", 3), ("u", "C", 1)], &catalog()).unwrap();
        let times: Vec<i64> = log.records().iter().map(|r| r.timestamp).collect();
        assert_eq!(times, vec![1, 3, 5]);
        assert_eq!(log.sequences()[0], vec![2, 1]);
        assert_eq!(log.consumer_index("v"), Some(1));
    }

    #[test]
    fn distinct_recent_keeps_last_occurrence() {
        assert_eq!(distinct_recent(&[1, 2, 1, 3]), vec![2, 1, 3]);
        assert!(distinct_recent(&[]).is_empty());
    }
}
