use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How attribute values are compared when decomposing the reference network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AttributeKind {
    /// Exact token equality.
    Categorical,
    /// Real-valued; quantile-binned into `levels` bins before equality.
    Numeric { levels: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: String,
    pub price: f64,
    /// Raw attribute tokens, one per attribute.
    pub values: Vec<String>,
    /// Equivalence level per attribute; equal levels mean `a_i^k ≅ a_j^k`.
    pub levels: Vec<u32>,
}

/// Products with prices and `K` attribute slots. Product indices are the
/// positions in [`Catalog::products`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Catalog {
    attribute_names: Vec<String>,
    attribute_kinds: Vec<AttributeKind>,
    products: Vec<Product>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Catalog row before level assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct RawProduct {
    pub id: String,
    pub price: f64,
    pub values: Vec<String>,
}

impl Catalog {
    /// Validates the rows and assigns equivalence levels. Categorical levels
    /// are ranks in the sorted set of distinct tokens; numeric attributes
    /// are quantile-binned over the whole catalog.
    pub fn new(
        attribute_names: Vec<String>,
        attribute_kinds: Vec<AttributeKind>,
        rows: Vec<RawProduct>,
    ) -> Result<Self> {
        let k = attribute_names.len();
        if attribute_kinds.len() != k {
            return Err(Error::Config(format!(
                "{} attribute kinds for {} attributes",
                attribute_kinds.len(),
                k
            )));
        }
        let mut index = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if !(row.price > 0.0 && row.price.is_finite()) {
                return Err(Error::InvalidPrice {
                    id: row.id.clone(),
                    price: row.price,
                });
            }
            if row.values.len() != k {
                return Err(Error::AttributeCount {
                    id: row.id.clone(),
                    expected: k,
                    got: row.values.len(),
                });
            }
            if index.insert(row.id.clone(), i).is_some() {
                return Err(Error::DuplicateProduct(row.id.clone()));
            }
        }
        let mut levels = vec![vec![0u32; k]; rows.len()];
        for (a, kind) in attribute_kinds.iter().enumerate() {
            let column: Vec<&str> = rows.iter().map(|r| r.values[a].as_str()).collect();
            let assigned = match kind {
                AttributeKind::Categorical => categorical_levels(&column),
                AttributeKind::Numeric { levels } => {
                    numeric_levels(&attribute_names[a], &column, *levels)?
                }
            };
            for (row_levels, level) in levels.iter_mut().zip(assigned) {
                row_levels[a] = level;
            }
        }
        let products = rows
            .into_iter()
            .zip(levels)
            .map(|(r, levels)| Product {
                id: r.id,
                price: r.price,
                values: r.values,
                levels,
            })
            .collect();
        Ok(Catalog {
            attribute_names,
            attribute_kinds,
            products,
            index,
        })
    }

    /// Rebuilds a catalog from products whose levels are already assigned,
    /// e.g. after deserialization or when carving out a sub-catalog.
    pub fn from_leveled(
        attribute_names: Vec<String>,
        attribute_kinds: Vec<AttributeKind>,
        products: Vec<Product>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(products.len());
        for (i, p) in products.iter().enumerate() {
            if p.levels.len() != attribute_names.len() || p.values.len() != attribute_names.len() {
                return Err(Error::AttributeCount {
                    id: p.id.clone(),
                    expected: attribute_names.len(),
                    got: p.levels.len().min(p.values.len()),
                });
            }
            if index.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicateProduct(p.id.clone()));
            }
        }
        Ok(Catalog {
            attribute_names,
            attribute_kinds,
            products,
            index,
        })
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn attribute_kinds(&self) -> &[AttributeKind] {
        &self.attribute_kinds
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn product(&self, index: usize) -> &Product {
        &self.products[index]
    }

    pub fn prices(&self) -> Vec<f64> {
        self.products.iter().map(|p| p.price).collect()
    }

    pub fn lookup(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn resolve(&self, id: &str) -> Result<usize> {
        self.lookup(id).ok_or_else(|| Error::UnknownProduct(id.to_string()))
    }

    /// Splits off the products at `excluded`, keeping their assigned levels.
    /// Returns the remaining catalog and the removed products in index order.
    pub fn split_off(&self, excluded: &BTreeSet<usize>) -> Result<(Catalog, Vec<Product>)> {
        let mut kept = Vec::with_capacity(self.products.len());
        let mut removed = Vec::with_capacity(excluded.len());
        for (i, p) in self.products.iter().enumerate() {
            if excluded.contains(&i) {
                removed.push(p.clone());
            } else {
                kept.push(p.clone());
            }
        }
        let catalog = Catalog::from_leveled(
            self.attribute_names.clone(),
            self.attribute_kinds.clone(),
            kept,
        )?;
        Ok((catalog, removed))
    }
}

fn categorical_levels(column: &[&str]) -> Vec<u32> {
    let distinct: BTreeSet<&str> = column.iter().copied().collect();
    let rank: HashMap<&str, u32> = distinct
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i as u32))
        .collect();
    column.iter().map(|v| rank[v]).collect()
}

/// Quantile binning: edges are the order statistics at `j·n/levels` for
/// `j = 1..levels`, and a value's level counts the edges it reaches.
fn numeric_levels(name: &str, column: &[&str], levels: usize) -> Result<Vec<u32>> {
    if levels == 0 {
        return Err(Error::Config(format!("attribute `{name}`: zero bin levels")));
    }
    let values: Vec<f64> = column
        .iter()
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Config(format!("attribute `{name}`: `{v}` is not a number")))
        })
        .collect::<Result<_>>()?;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let edges: Vec<f64> = (1..levels).filter(|_| n > 0).map(|j| sorted[(j * n / levels).min(n - 1)]).collect();
    Ok(values
        .iter()
        .map(|v| edges.iter().filter(|&&e| *v >= e).count() as u32)
        .collect())
}
