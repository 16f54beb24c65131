//! Normalized message passing over each attributed reference network.
//!
//! One round computes `h ← (D⁻¹ + D^{-1/2} S D^{-1/2}) h`: a self channel
//! scaled by the inverse degree plus symmetric-normalized neighbor sums.
//! The per-depth outputs are averaged with fixed weights `1/(l+1)`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graphs::Adjacency;
use crate::numeric::{CsrMatrix, Matrix, Tape, Var};

/// Builds the one-round propagation operator of a layer. Degrees are
/// weighted degrees, so binary graphs use plain neighbor counts. Isolated
/// nodes get self coefficient 1.
pub fn propagation_operator(adj: &Adjacency) -> CsrMatrix {
    let n = adj.num_nodes();
    let degrees: Vec<f64> = (0..n).map(|i| adj.weighted_degree(i)).collect();
    let mut triplets = Vec::with_capacity(n + 2 * adj.num_edges());
    for (i, &di) in degrees.iter().enumerate() {
        triplets.push((i, i, if di > 0.0 { 1.0 / di } else { 1.0 }));
        for &(j, w) in adj.neighbors(i) {
            triplets.push((i, j, w / (di.sqrt() * degrees[j].sqrt())));
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets).expect("indices come from the adjacency")
}

/// Layer-combination weights `(1/(l+1)) / Σ 1/(l'+1)` for `l = 0..=depth`.
/// Computed as integer numerators over `lcm(1..=depth+1)`, so each weight is
/// the correctly rounded fraction (`[6/11, 3/11, 2/11]` for depth 2).
pub fn layer_weights(depth: usize) -> Vec<f64> {
    let lcm = (1..=depth as u128 + 1).try_fold(1u128, |acc, k| (acc / gcd(acc, k)).checked_mul(k));
    match lcm {
        Some(lcm) => {
            let numerators: Vec<u128> = (0..=depth as u128).map(|l| lcm / (l + 1)).collect();
            let total: u128 = numerators.iter().sum();
            numerators.into_iter().map(|n| n as f64 / total as f64).collect()
        }
        None => {
            let raw: Vec<f64> = (0..=depth).map(|l| 1.0 / (l as f64 + 1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `h^{(0)} = e` followed by `depth` rounds of propagation.
pub fn propagate(operator: &CsrMatrix, base: &Matrix, depth: usize) -> Result<Vec<Matrix>> {
    let mut out = Vec::with_capacity(depth + 1);
    out.push(base.clone());
    for l in 0..depth {
        let next = operator.mul_dense(&out[l])?;
        out.push(next);
    }
    Ok(out)
}

/// Weighted sum of per-depth embeddings.
pub fn combine_layers(per_depth: &[Matrix]) -> Matrix {
    let weights = layer_weights(per_depth.len().saturating_sub(1));
    let mut out = Matrix::zeros(per_depth[0].rows(), per_depth[0].cols());
    for (h, w) in per_depth.iter().zip(weights) {
        out.add_scaled(h, w);
    }
    out
}

/// Taped counterpart of [`propagate`] followed by [`combine_layers`].
pub fn propagate_taped(
    tape: &mut Tape,
    operator: &Arc<CsrMatrix>,
    base: Var,
    depth: usize,
) -> Result<Var> {
    let weights = layer_weights(depth);
    let mut h = base;
    let mut combined = tape.scale(base, weights[0])?;
    for w in &weights[1..] {
        h = tape.sparse_matmul(Arc::clone(operator), h)?;
        let term = tape.scale(h, *w)?;
        combined = tape.add(combined, term)?;
    }
    Ok(combined)
}

/// Mean of the rows of `table` at `neighbors`; with no neighbors, the mean
/// of every row.
pub fn cold_embedding(neighbors: &[usize], table: &Matrix) -> Vec<f64> {
    let rows: Vec<usize> = if neighbors.is_empty() {
        (0..table.rows()).collect()
    } else {
        neighbors.to_vec()
    };
    let mut mean = vec![0.0; table.cols()];
    for &i in &rows {
        for (m, v) in mean.iter_mut().zip(table.row(i)) {
            *m += v;
        }
    }
    let n = rows.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Trainable base embeddings `e^k`, one `|V| × d` table per attribute layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub layers: Vec<Matrix>,
}

impl EmbeddingTable {
    /// Entries drawn from `N(0, std²)`.
    pub fn random(
        num_layers: usize,
        num_products: usize,
        dim: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let normal = Normal::new(0.0, std).expect("std is finite and non-negative");
        let layers = (0..num_layers)
            .map(|_| Matrix::from_fn(num_products, dim, |_, _| normal.sample(rng)))
            .collect();
        EmbeddingTable { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_products(&self) -> usize {
        self.layers.first().map_or(0, Matrix::rows)
    }

    pub fn dim(&self) -> usize {
        self.layers.first().map_or(0, Matrix::cols)
    }
}

/// Per-layer operators plus depth: everything needed to turn base
/// embeddings into combined representations `h^k`.
#[derive(Clone, Debug)]
pub struct Propagator {
    operators: Vec<Arc<CsrMatrix>>,
    depth: usize,
}

impl Propagator {
    pub fn new(layers: &[Adjacency], depth: usize) -> Self {
        Propagator {
            operators: layers
                .iter()
                .map(|a| Arc::new(propagation_operator(a)))
                .collect(),
            depth,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_layers(&self) -> usize {
        self.operators.len()
    }

    pub fn forward(&self, table: &EmbeddingTable) -> Result<Vec<Matrix>> {
        self.operators
            .iter()
            .zip(&table.layers)
            .map(|(op, e)| Ok(combine_layers(&propagate(op, e, self.depth)?)))
            .collect()
    }

    pub fn forward_taped(&self, tape: &mut Tape, bases: &[Var]) -> Result<Vec<Var>> {
        self.operators
            .iter()
            .zip(bases)
            .map(|(op, &e)| propagate_taped(tape, op, e, self.depth))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_for_small_depths() {
        assert_eq!(layer_weights(0), vec![1.0]);
        assert_eq!(layer_weights(1), vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(layer_weights(2), vec![6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]);
        let w = layer_weights(200);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12 && w.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn pair_of_degree_one_nodes() {
        let adj = Adjacency::from_edges(2, [(0, 1, 1.0)]);
        let e = Matrix::column(vec![2.0, 5.0]);
        let h = propagate(&propagation_operator(&adj), &e, 1).unwrap();
        assert_eq!(h[1].as_slice(), &[7.0, 7.0]);
    }

    #[test]
    fn isolated_node_passes_through() {
        let adj = Adjacency::from_edges(3, [(0, 1, 1.0)]);
        let e = Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64 + 1.0);
        let h = propagate(&propagation_operator(&adj), &e, 3).unwrap();
        for l in &h {
            assert_eq!(l.row(2), e.row(2));
        }
    }

    #[test]
    fn depth_zero_is_identity() {
        let adj = Adjacency::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]);
        let e = Matrix::from_fn(3, 2, |r, c| r as f64 - c as f64);
        let p = Propagator::new(&[adj], 0);
        let table = EmbeddingTable { layers: vec![e.clone()] };
        assert_eq!(p.forward(&table).unwrap()[0], e);
    }

    #[test]
    fn cold_embedding_cases() {
        let h = Matrix::from_vec(3, 2, vec![1.0, -2.0, -1.0, 2.0, 4.0, 4.0]).unwrap();
        assert_eq!(cold_embedding(&[2], &h), vec![4.0, 4.0]);
        assert_eq!(cold_embedding(&[0, 1], &h), vec![0.0, 0.0]);
        assert_eq!(cold_embedding(&[], &h), vec![4.0 / 3.0, 4.0 / 3.0]);
    }
}
