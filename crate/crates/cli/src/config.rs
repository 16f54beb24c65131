use std::path::{Path, PathBuf};

use arcrec::eval::TreatmentConfig;
use arcrec::graphs::GraphConfig;
use arcrec::io::CatalogSchema;
use arcrec::model::ModelConfig;
use arcrec::pipeline::FitConfig;
use arcrec::simulator::MarketConfig;
use arcrec::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliResult, Failure};

/// Input files. Relative paths resolve against the working directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub catalog: Option<PathBuf>,
    pub transactions: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub sensitivity: Option<PathBuf>,
    pub schema: CatalogSchema,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColdConfig {
    /// Hold products out of training so `evaluate --mode coldstart` can run.
    pub holdout: bool,
    pub fraction: f64,
}

impl Default for ColdConfig {
    fn default() -> Self {
        ColdConfig {
            holdout: false,
            fraction: 0.015,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub cold_ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![5, 10, 15],
            cold_ks: vec![5, 10, 15, 20],
        }
    }
}

/// Everything a command can be told, from a TOML file and flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    /// Train the matrix-factorization baseline instead of ArcRec.
    pub baseline: bool,
    pub market: MarketConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub graph: GraphConfig,
    pub cold: ColdConfig,
    pub eval: EvalConfig,
    pub treatment: TreatmentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            workers: 1,
            baseline: false,
            market: MarketConfig::default(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            graph: GraphConfig::default(),
            cold: ColdConfig::default(),
            eval: EvalConfig::default(),
            treatment: TreatmentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    pub fn fit(&self) -> FitConfig {
        FitConfig {
            model: self.model.clone(),
            train: self.training.clone(),
            graph: self.graph.clone(),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.workers == 0 {
            return Err(Failure::Config("workers must be positive".into()));
        }
        self.market.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        if self.data.schema.bins == 0 {
            return Err(Failure::Config("data.schema.bins must be positive".into()));
        }
        if self.eval.ks.contains(&0) || self.eval.cold_ks.contains(&0) {
            return Err(Failure::Config("cutoffs must be positive".into()));
        }
        Ok(())
    }

    /// The config as recorded in artifacts: input paths reduced to file
    /// names so the record does not depend on where the files live.
    pub fn echo(&self) -> RunConfig {
        let mut out = self.clone();
        for p in [
            &mut out.data.catalog,
            &mut out.data.transactions,
            &mut out.data.truth,
            &mut out.data.sensitivity,
        ] {
            *p = p.as_ref().and_then(|p| p.file_name()).map(PathBuf::from);
        }
        out
    }
}
