//! Reference-dependent utility: attention over past purchases, interest and
//! price preference networks, and attribute-level willingness-to-pay weights.

mod batch;
mod nets;
mod utility;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::Adjacency;
use crate::numeric::{Matrix, Tape, Var};
use crate::propagation::{EmbeddingTable, Propagator};

pub use batch::{batch_utilities, AwtpMode, Batch, BatchPrices, Query};
pub use nets::{NetVars, PreferenceNet};
pub use utility::{
    attention_weights, awtp_raw, awtp_scores, consumer_center, pair_utility, AwtpScores,
    ConsumerCenter, Scorer, AWTP_EPSILON,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Off: representations are the base embeddings ("w/o Net").
    pub use_arn_propagation: bool,
    /// Off: every layer is the raw reference network ("ArcRec-REF").
    pub decompose_by_attribute: bool,
    /// Off: uniform attribute weights ("w/o AWTP").
    pub use_awtp: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            use_arn_propagation: true,
            decompose_by_attribute: true,
            use_awtp: true,
        }
    }
}

impl AblationConfig {
    pub fn label(&self) -> &'static str {
        match (
            self.use_arn_propagation,
            self.decompose_by_attribute,
            self.use_awtp,
        ) {
            (true, true, true) => "ArcRec",
            (false, true, true) => "w/o Net",
            (true, false, true) => "ArcRec-REF",
            (true, true, false) => "w/o AWTP",
            _ => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Embedding width `d`.
    pub dim: usize,
    /// Propagation rounds `L`.
    pub depth: usize,
    pub init_std: f64,
    /// Most recent distinct purchases kept in a reference set.
    pub reference_cap: usize,
    /// Backpropagate through AWTP instead of treating it as a constant.
    pub awtp_gradient: bool,
    /// Standardize prices before the sticker-shock term.
    pub standardize_prices: bool,
    pub ablation: AblationConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            depth: 2,
            init_std: 0.1,
            reference_cap: 50,
            awtp_gradient: false,
            standardize_prices: false,
            ablation: AblationConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("model.dim must be positive".into()));
        }
        if self.reference_cap == 0 {
            return Err(Error::Config("model.reference_cap must be positive".into()));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::Config("model.init_std must be positive".into()));
        }
        Ok(())
    }

    pub fn awtp_mode(&self) -> AwtpMode {
        match (self.ablation.use_awtp, self.awtp_gradient) {
            (false, _) => AwtpMode::Uniform,
            (true, false) => AwtpMode::Detached,
            (true, true) => AwtpMode::Taped,
        }
    }
}

/// Affine map `(p − shift) / scale` applied to prices in the sticker-shock
/// term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceTransform {
    pub shift: f64,
    pub scale: f64,
}

impl PriceTransform {
    pub fn identity() -> Self {
        PriceTransform {
            shift: 0.0,
            scale: 1.0,
        }
    }

    /// Zero mean, unit variance over `prices`; identity scale if all equal.
    pub fn standardize(prices: &[f64]) -> Self {
        let n = prices.len().max(1) as f64;
        let mean = prices.iter().sum::<f64>() / n;
        let var = prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        PriceTransform {
            shift: mean,
            scale: if std > 0.0 { std } else { 1.0 },
        }
    }

    #[inline]
    pub fn apply(&self, price: f64) -> f64 {
        (price - self.shift) / self.scale
    }

    #[inline]
    pub fn invert(&self, value: f64) -> f64 {
        value * self.scale + self.shift
    }
}

/// The trainable state: per-layer base embeddings and both preference
/// networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub embeddings: EmbeddingTable,
    pub interest: PreferenceNet,
    pub price: PreferenceNet,
}

impl ModelParams {
    pub fn random(
        num_layers: usize,
        num_products: usize,
        config: &ModelConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let embeddings =
            EmbeddingTable::random(num_layers, num_products, config.dim, config.init_std, rng);
        let interest = PreferenceNet::random(config.dim, rng);
        let price = PreferenceNet::random(config.dim, rng);
        ModelParams {
            embeddings,
            interest,
            price,
        }
    }

    /// Every tensor in a fixed order: embedding layers, interest net,
    /// price net.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.embeddings.layers.iter().collect();
        out.extend(self.interest.tensors());
        out.extend(self.price.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.embeddings.layers.iter_mut().collect();
        out.extend(self.interest.tensors_mut());
        out.extend(self.price.tensors_mut());
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().map(|m| m.squared_norm()).sum()
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            embeddings: self
                .embeddings
                .layers
                .iter()
                .map(|e| tape.param(e.clone()))
                .collect(),
            interest: self.interest.register(tape),
            price: self.price.register(tape),
        }
    }
}

/// Tape handles of [`ModelParams`], in [`ModelParams::tensors`] order.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub embeddings: Vec<Var>,
    pub interest: NetVars,
    pub price: NetVars,
}

impl ModelVars {
    /// Rebuilds handles from a flat slice laid out as [`ModelVars::all`].
    pub fn from_vars(vars: &[Var], num_layers: usize) -> Self {
        assert_eq!(vars.len(), num_layers + 8, "embedding layers plus two nets");
        let net = |v: &[Var]| NetVars {
            hidden_weight: v[0],
            hidden_bias: v[1],
            output_weight: v[2],
            output_bias: v[3],
        };
        ModelVars {
            embeddings: vars[..num_layers].to_vec(),
            interest: net(&vars[num_layers..num_layers + 4]),
            price: net(&vars[num_layers + 4..]),
        }
    }

    pub fn all(&self) -> Vec<Var> {
        let mut out = self.embeddings.clone();
        out.extend(self.interest.all());
        out.extend(self.price.all());
        out
    }
}

/// A model bound to its training graphs and catalog prices.
#[derive(Clone, Debug)]
pub struct ArcRec {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub raw_prices: Vec<f64>,
    pub transform: PriceTransform,
    propagator: Propagator,
}

impl ArcRec {
    /// Fresh parameters for the given layers (one adjacency per attribute).
    pub fn new(
        config: ModelConfig,
        layers: &[Adjacency],
        raw_prices: Vec<f64>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let num_products = raw_prices.len();
        let params = ModelParams::random(layers.len(), num_products, &config, rng);
        Self::from_parts(config, params, layers, raw_prices)
    }

    pub fn from_parts(
        config: ModelConfig,
        params: ModelParams,
        layers: &[Adjacency],
        raw_prices: Vec<f64>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("at least one attribute layer is required".into()));
        }
        if params.embeddings.num_layers() != layers.len() {
            return Err(Error::SizeMismatch {
                left: params.embeddings.num_layers(),
                right: layers.len(),
            });
        }
        if let Some(bad) = layers.iter().find(|a| a.num_nodes() != raw_prices.len()) {
            return Err(Error::SizeMismatch {
                left: bad.num_nodes(),
                right: raw_prices.len(),
            });
        }
        if params.embeddings.num_products() != raw_prices.len() {
            return Err(Error::SizeMismatch {
                left: params.embeddings.num_products(),
                right: raw_prices.len(),
            });
        }
        let transform = if config.standardize_prices {
            PriceTransform::standardize(&raw_prices)
        } else {
            PriceTransform::identity()
        };
        let propagator = Propagator::new(layers, config.depth);
        Ok(ArcRec {
            config,
            params,
            raw_prices,
            transform,
            propagator,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.params.embeddings.num_layers()
    }

    pub fn num_products(&self) -> usize {
        self.raw_prices.len()
    }

    /// Combined representations `h^k`, or the base embeddings when
    /// propagation is ablated.
    pub fn representations(&self) -> Result<Vec<Matrix>> {
        if self.config.ablation.use_arn_propagation {
            self.propagator.forward(&self.params.embeddings)
        } else {
            Ok(self.params.embeddings.layers.clone())
        }
    }

    pub fn representations_taped(&self, tape: &mut Tape, vars: &ModelVars) -> Result<Vec<Var>> {
        if self.config.ablation.use_arn_propagation {
            self.propagator.forward_taped(tape, &vars.embeddings)
        } else {
            Ok(vars.embeddings.clone())
        }
    }

    pub fn scorer(&self) -> Result<Scorer> {
        Ok(Scorer::new(
            self.representations()?,
            self.raw_prices.clone(),
            self.transform,
            self.params.interest.clone(),
            self.params.price.clone(),
            self.config.ablation.use_awtp,
        ))
    }

    /// Taped utilities of a batch under the configured AWTP mode.
    pub fn batch_utilities(&self, tape: &mut Tape, vars: &ModelVars, batch: &Batch) -> Result<Var> {
        let reps = self.representations_taped(tape, vars)?;
        let prices = BatchPrices {
            raw: &self.raw_prices,
            transform: self.transform,
        };
        batch_utilities(
            tape,
            &reps,
            &vars.interest,
            &vars.price,
            batch,
            &prices,
            &self.config.awtp_mode(),
        )
    }
}
