use std::path::Path;

use arcrec::eval::BprMf;
use arcrec::graphs::{Adjacency, GraphConfig};
use arcrec::model::{ArcRec, ModelConfig, ModelParams, PriceTransform};
use arcrec::training::TrainingReport;
use serde::{Deserialize, Serialize};

use crate::error::{CliResult, Failure};
use crate::output::RunInfo;

pub const FORMAT: &str = "arcrec-checkpoint";
pub const VERSION: u32 = 1;

/// Undirected edge list `(i, j, weight)` with `i < j`.
pub type EdgeList = Vec<(usize, usize, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoredModel {
    Arcrec {
        /// Ablation variant, e.g. "ArcRec" or "w/o AWTP".
        variant: String,
        config: ModelConfig,
        graph: GraphConfig,
        raw_prices: Vec<f64>,
        price_transform: PriceTransform,
        layers: Vec<EdgeList>,
        params: ModelParams,
    },
    Bprmf {
        params: BprMf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub run: RunInfo,
    /// Products the model was trained on, in model index order.
    pub product_ids: Vec<String>,
    pub attributes: Vec<String>,
    pub consumer_ids: Vec<String>,
    /// Products held out of training for cold-start evaluation.
    pub cold_products: Vec<String>,
    /// Each consumer's purchases over the trained products, time order.
    pub histories: Vec<Vec<usize>>,
    pub model: StoredModel,
    pub report: TrainingReport,
}

impl Checkpoint {
    pub fn store_arcrec(model: &ArcRec, graph: &GraphConfig, layers: &[Adjacency]) -> StoredModel {
        StoredModel::Arcrec {
            variant: model.config.ablation.label().into(),
            config: model.config.clone(),
            graph: graph.clone(),
            raw_prices: model.raw_prices.clone(),
            price_transform: model.transform,
            layers: layers.iter().map(|a| a.edges().collect()).collect(),
            params: model.params.clone(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Failure::Data(format!("{}: not a checkpoint: {e}", path.display())))?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Failure::Data(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("serializable");
        bytes.push(b'\n');
        bytes
    }

    pub fn arcrec(&self) -> CliResult<ArcRec> {
        match &self.model {
            StoredModel::Arcrec {
                config,
                raw_prices,
                layers,
                params,
                ..
            } => {
                let n = raw_prices.len();
                let layers: Vec<Adjacency> = layers
                    .iter()
                    .map(|edges| {
                        if edges.iter().any(|&(i, j, _)| i >= n || j >= n) {
                            return Err(Failure::Data("checkpoint edge endpoint out of range".into()));
                        }
                        Ok(Adjacency::from_edges(n, edges.iter().copied()))
                    })
                    .collect::<CliResult<_>>()?;
                ArcRec::from_parts(config.clone(), params.clone(), &layers, raw_prices.clone())
                    .map_err(|e| Failure::Data(format!("inconsistent checkpoint: {e}")))
            }
            StoredModel::Bprmf { .. } => Err(Failure::Config(
                "this operation needs an ArcRec checkpoint, not the baseline".into(),
            )),
        }
    }

    pub fn reference_cap(&self) -> usize {
        match &self.model {
            StoredModel::Arcrec { config, .. } => config.reference_cap,
            StoredModel::Bprmf { .. } => usize::MAX,
        }
    }

    pub fn consumer(&self, id: &str) -> CliResult<usize> {
        self.consumer_ids
            .iter()
            .position(|c| c == id)
            .ok_or_else(|| Failure::Data(format!("unknown consumer id `{id}`")))
    }
}
