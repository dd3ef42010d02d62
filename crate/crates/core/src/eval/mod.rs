//! Metrics, stratified folds, the plugin boundary and the four experimental
//! protocols: cross-validation, zero-day, incremental and cross-dataset.

mod data;
mod folds;
mod metrics;
mod plugin;
mod protocols;
mod report;

use std::path::PathBuf;

pub use data::{EvalData, Task};
pub use folds::{stratified_kfold, FoldAssignment};
pub use metrics::{compute_metrics, BinaryCounts, ClassMetrics, ConfusionMatrix, Fraction, MetricsReport};
pub use plugin::{read_prediction_file, write_prediction_file, ExternalPlugin, ModelPlugin, PluginJob, Target};
pub use protocols::{
    derive_seed, run_cross_dataset, run_cv, run_incremental, run_zero_day, run_zero_day_all, CrossResult, CvResult,
    IncrementalOptions, IncrementalStep, IncrementalTask, SamplePrediction, ZeroDayOptions, ZeroDayResult,
    MTAB_FAMILY_ORDER, USTCB_FAMILY_ORDER,
};
pub use report::{fingerprint, read_report, write_predictions_csv, write_report, ReportBody, ReportFile};

use crate::features::FeatureError;
use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{truth} true labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {0:?} is not in the class list")]
    UnknownLabel(String),
    #[error("class {class} has {count} members, fewer than k = {k}")]
    ClassTooSmall { class: usize, count: usize, k: usize },
    #[error("family {family:?} not found in dataset {dataset:?}")]
    UnknownFamily { family: String, dataset: String },
    #[error("{} task needs at least 2 classes, found {found}", task.as_str())]
    TooFewClasses { task: Task, found: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("train/test leakage: {0}")]
    Leakage(String),
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: ModelError,
    },
    #[error("plugin failure in {context}: {message}")]
    Plugin { context: String, message: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
