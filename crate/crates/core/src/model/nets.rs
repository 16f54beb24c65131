use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{sigmoid, Matrix, Tape, Var};

/// One-hidden-layer perceptron `R^d → R` with sigmoid hidden units and a
/// linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceNet {
    /// `d × d`
    pub hidden_weight: Matrix,
    /// `1 × d`
    pub hidden_bias: Matrix,
    /// `d × 1`
    pub output_weight: Matrix,
    /// `1 × 1`
    pub output_bias: Matrix,
}

impl PreferenceNet {
    /// Weights from `N(0, 1/d)`, zero biases.
    pub fn random(dim: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 1.0 / (dim.max(1) as f64).sqrt()).expect("valid std");
        PreferenceNet {
            hidden_weight: Matrix::from_fn(dim, dim, |_, _| normal.sample(rng)),
            hidden_bias: Matrix::zeros(1, dim),
            output_weight: Matrix::from_fn(dim, 1, |_, _| normal.sample(rng)),
            output_bias: Matrix::zeros(1, 1),
        }
    }

    /// Network with every weight zero and output bias `value`.
    pub fn constant(dim: usize, value: f64) -> Self {
        PreferenceNet {
            hidden_weight: Matrix::zeros(dim, dim),
            hidden_bias: Matrix::zeros(1, dim),
            output_weight: Matrix::zeros(dim, 1),
            output_bias: Matrix::scalar(value),
        }
    }

    pub fn dim(&self) -> usize {
        self.hidden_weight.rows()
    }

    pub fn tensors(&self) -> [&Matrix; 4] {
        [
            &self.hidden_weight,
            &self.hidden_bias,
            &self.output_weight,
            &self.output_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 4] {
        [
            &mut self.hidden_weight,
            &mut self.hidden_bias,
            &mut self.output_weight,
            &mut self.output_bias,
        ]
    }

    /// Row-wise evaluation: `n × d` → `n × 1`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut hidden = x.matmul(&self.hidden_weight)?;
        let bias = self.hidden_bias.as_slice();
        for r in 0..hidden.rows() {
            for (h, b) in hidden.row_mut(r).iter_mut().zip(bias) {
                *h = sigmoid(*h + b);
            }
        }
        let mut out = hidden.matmul(&self.output_weight)?;
        let b = self.output_bias.as_slice()[0];
        out.as_mut_slice().iter_mut().for_each(|o| *o += b);
        Ok(out)
    }

    pub fn register(&self, tape: &mut Tape) -> NetVars {
        NetVars {
            hidden_weight: tape.param(self.hidden_weight.clone()),
            hidden_bias: tape.param(self.hidden_bias.clone()),
            output_weight: tape.param(self.output_weight.clone()),
            output_bias: tape.param(self.output_bias.clone()),
        }
    }
}

/// Tape handles of one [`PreferenceNet`].
#[derive(Clone, Copy, Debug)]
pub struct NetVars {
    pub hidden_weight: Var,
    pub hidden_bias: Var,
    pub output_weight: Var,
    pub output_bias: Var,
}

impl NetVars {
    pub fn all(&self) -> [Var; 4] {
        [
            self.hidden_weight,
            self.hidden_bias,
            self.output_weight,
            self.output_bias,
        ]
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let pre = tape.matmul(x, self.hidden_weight)?;
        let pre = tape.add_row(pre, self.hidden_bias)?;
        let hidden = tape.sigmoid(pre)?;
        let out = tape.matmul(hidden, self.output_weight)?;
        Ok(tape.add_row(out, self.output_bias)?)
    }
}
