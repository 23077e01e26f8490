//! Dataset ingestion, train/test split protocols and experiment
//! orchestration.

mod dataset;
mod experiment;
mod split;

pub use dataset::{load_image, scan_dataset, ClassEntry, DatasetManifest, ScanOutcome};
pub use experiment::{
    backend_digest, cache_file, extract_source_table, run_experiment, run_experiment_with, tune_cost, ConfigResult,
    ExperimentConfig, ExperimentReport, FeatureConfig, FeatureStore, RepetitionResult, SourceTable,
};
pub use split::{
    make_split, Repetition, SplitFile, SplitFileRepetition, SplitKind, SplitPlan, SplitProtocol, TestCount,
};

use thiserror::Error;

use crate::cache::CacheError;
use crate::classifier::ClassifierError;
use crate::features::FeatureError;
use crate::image::ImageError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dataset root {0} does not exist or is not a directory")]
    MissingRoot(String),
    #[error("dataset needs at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("class {0:?} has no readable images")]
    EmptyClass(String),
    #[error("class {class:?} has {available} images but the protocol needs {needed}")]
    ClassTooSmall { class: String, available: usize, needed: usize },
    #[error("invalid protocol: {0}")]
    Protocol(String),
    #[error("split file does not match the dataset: {0}")]
    SplitMismatch(String),
    #[error("{path}: {source}")]
    Image { path: String, source: ImageError },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
