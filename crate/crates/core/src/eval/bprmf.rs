use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{Matrix, Tape, Var};
use crate::training::{Trainable, TrainingData, Triplet};

use super::Recommender;

/// Matrix-factorization baseline: score = ⟨user factor, item factor⟩.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BprMf {
    pub users: Matrix,
    pub items: Matrix,
}

impl BprMf {
    pub fn random(num_users: usize, num_items: usize, dim: usize, std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("valid std");
        BprMf {
            users: Matrix::from_fn(num_users, dim, |_, _| normal.sample(rng)),
            items: Matrix::from_fn(num_items, dim, |_, _| normal.sample(rng)),
        }
    }
}

impl Trainable for BprMf {
    type Ranker = BprMf;

    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.users, &self.items]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.users, &mut self.items]
    }

    fn triplet_utilities(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        triplets: &[Triplet],
        _data: &TrainingData,
    ) -> Result<(Var, Var)> {
        let consumers: Arc<[usize]> = triplets.iter().map(|t| t.consumer).collect::<Vec<_>>().into();
        let pos: Arc<[usize]> = triplets.iter().map(|t| t.positive).collect::<Vec<_>>().into();
        let neg: Arc<[usize]> = triplets.iter().map(|t| t.negative).collect::<Vec<_>>().into();
        let u = tape.gather_rows(vars[0], consumers)?;
        let i = tape.gather_rows(vars[1], pos)?;
        let j = tape.gather_rows(vars[1], neg)?;
        Ok((tape.row_dot(u, i)?, tape.row_dot(u, j)?))
    }

    fn ranker(&self) -> Result<BprMf> {
        Ok(self.clone())
    }
}

impl Recommender for BprMf {
    fn scores(
        &self,
        consumer: usize,
        _history: &[usize],
        candidates: &[usize],
        _target_prices: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let u = self.users.row(consumer);
        Ok(candidates
            .iter()
            .map(|&c| u.iter().zip(self.items.row(c)).map(|(a, b)| a * b).sum())
            .collect())
    }
}
