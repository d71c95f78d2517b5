//! Experiment configuration, the end-to-end pipeline and report rendering.

mod analysis;
mod config;
mod pipeline;
mod plan;
mod privatizer;
mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use analysis::{analyze, DatasetSummary, StatsReport};
pub use config::{
    ClassifierConfig, DatasetConfig, EmbeddingConfig, ExperimentConfig, FeatureConfig, Level, MechanismSweep,
    SplitConfig, StatsConfig, ENV_JOBS, ENV_NN_CAP, ENV_OUT, ENV_SEED,
};
pub use pipeline::{config_hash, run_pipeline, PipelineOutcome, RunOptions};
pub use privatizer::Privatizer;
pub use plan::{BaselineVariant, CellKey, Plan, PlannedMechanism, RunManifest, UnitEntry, UnitStatus};
pub use report::render_table2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("manifest in {0} was written for a different configuration; rerun without --resume")]
    ConfigChanged(PathBuf),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Embedding(#[from] crate::embeddings::EmbeddingError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
