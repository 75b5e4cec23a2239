//! End-to-end experiment: data preparation, training, evaluation and reporting.

pub mod data;
pub mod evaluate;
pub mod report;
pub mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use data::{synthetic_panel, PreparedSeries, SyntheticSpec, Universe, WindowRef};
pub use evaluate::{ablate, compare, evaluate, run_comparison, run_pilot, PilotOutcome, Cell, CollapseRow, Comparison, EvalReport, Family, ModelRow};
pub use train::{train, train_variant, train_variants, EpochStats, HurstMode, TrainConfig, TrainHistory, TrainedModel, Variant};

use crate::error::{Error, Result};
use crate::nn::ModelConfig;
use crate::series::{load_csv, CsvFormat, Panel};

/// Where the return panel comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv { path: PathBuf, format: CsvFormat },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

impl DataSource {
    pub fn load(&self) -> Result<Panel> {
        match self {
            DataSource::Synthetic(spec) => Ok(synthetic_panel(spec)?.0),
            DataSource::Csv { path, format } => load_csv(path, *format),
        }
    }
}

/// Full experiment configuration, read from a JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Horizons reported in the tables; defaults to the trained horizons.
    pub eval_horizons: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if let Some(h) = &self.eval_horizons {
            let trained = self.train.all_horizons();
            if let Some(t) = h.iter().find(|t| !trained.contains(t)) {
                return Err(crate::error::invalid(format!("evaluation horizon {t} is not trained")));
            }
        }
        Ok(())
    }

    pub fn horizons(&self) -> Vec<usize> {
        self.eval_horizons.clone().unwrap_or_else(|| self.train.all_horizons())
    }

    pub fn universe(&self) -> Result<Universe> {
        Universe::prepare(&self.data.load()?, &self.train)
    }
}
