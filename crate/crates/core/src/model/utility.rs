//! Straight-line evaluation of the reference-dependent utility, plus a
//! batched scorer for ranking many candidates against one reference set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{softmax, Matrix};

use super::{PreferenceNet, PriceTransform};

/// Floor applied to the price and deviation denominators of the AWTP ratio.
pub const AWTP_EPSILON: f64 = 1e-8;

/// Softmax of `⟨target, ref_j⟩` over the reference set.
pub fn attention_weights(target: &[f64], refs: &[&[f64]]) -> Result<Vec<f64>> {
    if refs.is_empty() {
        return Err(Error::EmptyReferenceSet("attention".into()));
    }
    let logits: Vec<f64> = refs.iter().map(|r| dot(target, r)).collect();
    Ok(softmax(&logits))
}

/// `interest(h_i ⊙ h_j) + price(h_i ⊙ h_j) · (p_j − p_i)` for one layer.
pub fn pair_utility(
    interest: &PreferenceNet,
    price: &PreferenceNet,
    target: &[f64],
    reference: &[f64],
    target_price: f64,
    reference_price: f64,
) -> Result<f64> {
    let x: Vec<f64> = target.iter().zip(reference).map(|(a, b)| a * b).collect();
    let x = Matrix::row_vector(x);
    let a = interest.forward(&x)?.item()?;
    let b = price.forward(&x)?.item()?;
    Ok(a + b * (reference_price - target_price))
}

/// Mean embedding and mean price of a purchase set.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumerCenter {
    pub embedding: Vec<f64>,
    pub price: f64,
}

pub fn consumer_center(rows: &[&[f64]], prices: &[f64]) -> Result<ConsumerCenter> {
    if rows.is_empty() {
        return Err(Error::EmptyReferenceSet("consumer center".into()));
    }
    let n = rows.len() as f64;
    let mut embedding = vec![0.0; rows[0].len()];
    for r in rows {
        for (m, v) in embedding.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    embedding.iter_mut().for_each(|m| *m /= n);
    let price = prices.iter().sum::<f64>() / n;
    Ok(ConsumerCenter { embedding, price })
}

/// Unnormalized willingness-to-pay score of one attribute layer:
/// `Σ_i (|p_i − p̄| / |p̄|) / (‖h_i − h̄‖ / ‖h̄‖)`.
pub fn awtp_raw(rows: &[&[f64]], prices: &[f64], center: &ConsumerCenter) -> f64 {
    let center_norm = norm(&center.embedding);
    if center_norm == 0.0 {
        return 0.0;
    }
    let price_scale = center.price.abs().max(AWTP_EPSILON);
    rows.iter()
        .zip(prices)
        .map(|(row, &p)| {
            let deviation: f64 = row
                .iter()
                .zip(&center.embedding)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                .max(AWTP_EPSILON);
            (p - center.price).abs() / price_scale * center_norm / deviation
        })
        .sum()
}

/// Raw and softmax-normalized AWTP scores of one consumer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AwtpScores {
    pub raw: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn awtp_scores(layers: &[Matrix], items: &[usize], raw_prices: &[f64]) -> Result<AwtpScores> {
    if items.is_empty() {
        return Err(Error::EmptyReferenceSet("awtp".into()));
    }
    let prices: Vec<f64> = items.iter().map(|&i| raw_prices[i]).collect();
    let raw: Vec<f64> = layers
        .iter()
        .map(|h| {
            let rows: Vec<&[f64]> = items.iter().map(|&i| h.row(i)).collect();
            let center = consumer_center(&rows, &prices)?;
            Ok(awtp_raw(&rows, &prices, &center))
        })
        .collect::<Result<_>>()?;
    let weights = softmax(&raw);
    Ok(AwtpScores { raw, weights })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Read-only scoring state: combined representations `h^k`, their
/// concatenation `h*`, prices, and the preference networks.
#[derive(Clone, Debug)]
pub struct Scorer {
    layers: Vec<Matrix>,
    joint: Matrix,
    raw_prices: Vec<f64>,
    transform: PriceTransform,
    interest: PreferenceNet,
    price: PreferenceNet,
    use_awtp: bool,
}

const CHUNK_ROWS: usize = 4096;

impl Scorer {
    pub fn new(
        layers: Vec<Matrix>,
        raw_prices: Vec<f64>,
        transform: PriceTransform,
        interest: PreferenceNet,
        price: PreferenceNet,
        use_awtp: bool,
    ) -> Self {
        let joint = joint_table(&layers);
        Scorer {
            layers,
            joint,
            raw_prices,
            transform,
            interest,
            price,
            use_awtp,
        }
    }

    pub fn num_products(&self) -> usize {
        self.raw_prices.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn raw_prices(&self) -> &[f64] {
        &self.raw_prices
    }

    pub fn interest(&self) -> &PreferenceNet {
        &self.interest
    }

    pub fn price_net(&self) -> &PreferenceNet {
        &self.price
    }

    /// Appends a product outside the training graph with the given per-layer
    /// representation rows; returns its index.
    pub fn add_product(&mut self, rows: &[Vec<f64>], raw_price: f64) -> usize {
        assert_eq!(rows.len(), self.layers.len(), "one row per layer");
        let index = self.raw_prices.len();
        for (h, row) in self.layers.iter_mut().zip(rows) {
            let mut data = std::mem::replace(h, Matrix::zeros(0, 0)).into_vec();
            data.extend_from_slice(row);
            let cols = row.len();
            *h = Matrix::from_vec(index + 1, cols, data).expect("row width matches layer");
        }
        self.joint = joint_table(&self.layers);
        self.raw_prices.push(raw_price);
        index
    }

    /// AWTP scores from a purchase set.
    pub fn awtp(&self, items: &[usize]) -> Result<AwtpScores> {
        awtp_scores(&self.layers, items, &self.raw_prices)
    }

    /// Attribute weights used in the utility: AWTP, or uniform `1/K` when
    /// AWTP is disabled.
    pub fn attribute_weights(&self, items: &[usize]) -> Result<Vec<f64>> {
        if self.use_awtp {
            Ok(self.awtp(items)?.weights)
        } else {
            if items.is_empty() {
                return Err(Error::EmptyReferenceSet("awtp".into()));
            }
            let k = self.layers.len();
            Ok(vec![1.0 / k as f64; k])
        }
    }

    /// Utility of one target against `refs \ {target}`, evaluated term by
    /// term. `target_price` overrides the catalog price of the target.
    pub fn utility(
        &self,
        weights: &[f64],
        target: usize,
        refs: &[usize],
        target_price: Option<f64>,
    ) -> Result<f64> {
        let refs: Vec<usize> = refs.iter().copied().filter(|&j| j != target).collect();
        let ref_rows: Vec<&[f64]> = refs.iter().map(|&j| self.joint.row(j)).collect();
        let gamma = attention_weights(self.joint.row(target), &ref_rows)?;
        let p_i = self
            .transform
            .apply(target_price.unwrap_or(self.raw_prices[target]));
        let mut total = 0.0;
        for (&j, g) in refs.iter().zip(&gamma) {
            let p_j = self.transform.apply(self.raw_prices[j]);
            let mut inner = 0.0;
            for (h, w) in self.layers.iter().zip(weights) {
                inner += w * pair_utility(&self.interest, &self.price, h.row(target), h.row(j), p_i, p_j)?;
            }
            total += g * inner;
        }
        Ok(total)
    }

    /// Utilities of many candidates against one reference set, batched
    /// through matrix products. Each candidate is excluded from its own
    /// reference set.
    pub fn score(
        &self,
        weights: &[f64],
        refs: &[usize],
        candidates: &[usize],
        target_prices: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(candidates.len());
        let per_candidate = refs.len().max(1);
        let chunk = (CHUNK_ROWS / per_candidate).max(1);
        for (c, block) in candidates.chunks(chunk).enumerate() {
            let prices = target_prices.map(|p| &p[c * chunk..c * chunk + block.len()]);
            out.extend(self.score_block(weights, refs, block, prices)?);
        }
        Ok(out)
    }

    fn score_block(
        &self,
        weights: &[f64],
        refs: &[usize],
        candidates: &[usize],
        target_prices: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(candidates.len() * refs.len());
        let mut offsets = Vec::with_capacity(candidates.len() + 1);
        offsets.push(0);
        for &c in candidates {
            pairs.extend(refs.iter().filter(|&&j| j != c).map(|&j| (c, j)));
            if pairs.len() == *offsets.last().expect("starts with 0") {
                return Err(Error::EmptyReferenceSet(format!("candidate #{c}")));
            }
            offsets.push(pairs.len());
        }
        let mut candidate_price = vec![0.0; pairs.len()];
        for (s, w) in offsets.windows(2).enumerate() {
            let raw = target_prices.map_or(self.raw_prices[candidates[s]], |p| p[s]);
            candidate_price[w[0]..w[1]].fill(self.transform.apply(raw));
        }
        let mut combined = vec![0.0; pairs.len()];
        for (h, &w) in self.layers.iter().zip(weights) {
            let d = h.cols();
            let mut x = Vec::with_capacity(pairs.len() * d);
            for &(c, j) in &pairs {
                x.extend(h.row(c).iter().zip(h.row(j)).map(|(a, b)| a * b));
            }
            let x = Matrix::from_vec(pairs.len(), d, x)?;
            let a = self.interest.forward(&x)?;
            let b = self.price.forward(&x)?;
            for (r, &(_, j)) in pairs.iter().enumerate() {
                let shock = self.transform.apply(self.raw_prices[j]) - candidate_price[r];
                combined[r] += w * (a.as_slice()[r] + b.as_slice()[r] * shock);
            }
        }
        let logits: Vec<f64> = pairs
            .iter()
            .map(|&(c, j)| dot(self.joint.row(c), self.joint.row(j)))
            .collect();
        Ok(offsets
            .windows(2)
            .map(|w| {
                let gamma = softmax(&logits[w[0]..w[1]]);
                gamma.iter().zip(&combined[w[0]..w[1]]).map(|(g, f)| g * f).sum()
            })
            .collect())
    }

    /// Mean price-network output over the pairs of a purchase set, a proxy
    /// for the consumer's price sensitivity.
    pub fn price_response(&self, items: &[usize]) -> Result<f64> {
        if items.is_empty() {
            return Err(Error::EmptyReferenceSet("price response".into()));
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for h in &self.layers {
            let d = h.cols();
            let mut x = Vec::with_capacity(items.len() * items.len() * d);
            for &i in items {
                for &j in items {
                    x.extend(h.row(i).iter().zip(h.row(j)).map(|(a, b)| a * b));
                }
            }
            let out = self.price.forward(&Matrix::from_vec(items.len() * items.len(), d, x)?)?;
            total += out.sum();
            count += out.rows();
        }
        Ok(total / count as f64)
    }
}

fn joint_table(layers: &[Matrix]) -> Matrix {
    let rows = layers.first().map_or(0, Matrix::rows);
    let cols: usize = layers.iter().map(Matrix::cols).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for h in layers {
            data.extend_from_slice(h.row(r));
        }
    }
    Matrix::from_vec(rows, cols, data).expect("layers share a row count")
}
