//! Classical learners: CART decision tree, random forest / extra trees, and
//! brute-force k-nearest neighbours.
//!
//! Every model outputs class-probability vectors; hard labels are the
//! argmax with ties going to the lowest class index. Training is fully
//! deterministic given the seed.

mod forest;
mod knn;
mod persist;
mod tree;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, ForestMode, ForestModel, ForestParams, MaxFeatures};
pub use knn::{fit_knn, KnnModel};
pub use persist::{load_model, read_model, save_model, write_model};
pub use tree::{fit_tree, DecisionTree, TreeNode, TreeParams};

use crate::features::FeatureMatrix;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("dimension mismatch: model expects {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{samples} samples but {labels} labels")]
    LengthMismatch { samples: usize, labels: usize },
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A fitted probabilistic classifier.
pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;

    fn n_classes(&self) -> usize;

    fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>, ModelError>;

    fn predict(&self, x: &[f32]) -> Result<usize, ModelError> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>, ModelError> {
        (0..x.rows()).map(|i| self.predict_proba(x.row(i))).collect()
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_dims(expected: usize, x: &[f32]) -> Result<(), ModelError> {
    if x.len() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_training(x: &FeatureMatrix, y: &[usize], n_classes: usize) -> Result<(), ModelError> {
    if x.rows() == 0 || y.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.rows() != y.len() {
        return Err(ModelError::LengthMismatch {
            samples: x.rows(),
            labels: y.len(),
        });
    }
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(ModelError::LabelOutOfRange { label, n_classes });
    }
    Ok(())
}

/// Which learner to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Dt(TreeParams),
    Rf(ForestParams),
    ExtraTrees(ForestParams),
    Knn { k: usize },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Dt(_) => "dt",
            ModelSpec::Rf(_) => "rf",
            ModelSpec::ExtraTrees(_) => "extra_trees",
            ModelSpec::Knn { .. } => "knn",
        }
    }

    /// Default hyperparameters for a model name (`dt`, `rf`, `extra_trees`
    /// / `et`, `knn`).
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "dt" => Some(ModelSpec::Dt(TreeParams::default())),
            "rf" => Some(ModelSpec::Rf(ForestParams::random_forest())),
            "extra_trees" | "et" => Some(ModelSpec::ExtraTrees(ForestParams::extra_trees())),
            "knn" => Some(ModelSpec::Knn { k: 3 }),
            _ => None,
        }
    }

    pub fn fit(&self, x: &FeatureMatrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Model, ModelError> {
        Ok(match self {
            ModelSpec::Dt(p) => Model::Tree(fit_tree(x, y, n_classes, p)?),
            ModelSpec::Rf(p) => Model::Forest(fit_forest(
                x,
                y,
                n_classes,
                &p.with_mode(ForestMode::RandomForest),
                seed,
            )?),
            ModelSpec::ExtraTrees(p) => {
                Model::Forest(fit_forest(x, y, n_classes, &p.with_mode(ForestMode::ExtraTrees), seed)?)
            }
            ModelSpec::Knn { k } => Model::Knn(fit_knn(x, y, n_classes, *k)?),
        })
    }
}

/// Any fitted native model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tree(DecisionTree),
    Forest(ForestModel),
    Knn(KnnModel),
}

impl Classifier for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Tree(m) => m.n_features(),
            Model::Forest(m) => m.n_features(),
            Model::Knn(m) => m.n_features(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            Model::Tree(m) => m.n_classes(),
            Model::Forest(m) => m.n_classes(),
            Model::Knn(m) => m.n_classes(),
        }
    }

    fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>, ModelError> {
        match self {
            Model::Tree(m) => m.predict_proba(x),
            Model::Forest(m) => m.predict_proba(x),
            Model::Knn(m) => m.predict_proba(x),
        }
    }
}
