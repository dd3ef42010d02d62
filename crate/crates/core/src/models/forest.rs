use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{SplitStrategy, TreeBuilder};
use super::{check_dims, check_training, Classifier, ModelError, TreeNode, TreeParams};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    /// Bootstrap samples, best threshold among a random feature subset.
    RandomForest,
    /// One random threshold per candidate feature.
    ExtraTrees,
}

/// Features considered at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))`
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k.min(d),
        }
        .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub mode: ForestMode,
    pub tree: TreeParams,
}

impl ForestParams {
    pub fn random_forest() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            mode: ForestMode::RandomForest,
            tree: TreeParams::default(),
        }
    }

    pub fn extra_trees() -> Self {
        ForestParams {
            bootstrap: false,
            mode: ForestMode::ExtraTrees,
            ..Self::random_forest()
        }
    }

    pub fn with_mode(&self, mode: ForestMode) -> Self {
        ForestParams { mode, ..self.clone() }
    }
}

impl Default for ForestParams {
    fn default() -> Self {
        Self::random_forest()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub mode: ForestMode,
    /// Resolved per-split feature count.
    pub feature_subsample: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub n_features: usize,
    pub n_classes: usize,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl Classifier for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Mean of the trees' leaf distributions.
    fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>, ModelError> {
        check_dims(self.n_features, x)?;
        let mut acc = vec![0.0f64; self.n_classes];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.leaf_probs(x)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

/// Random stream for one tree: ChaCha keyed by the forest seed, with the
/// tree index selecting the stream.
fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Fit a forest. Trees are grown in parallel; each draws from its own
/// counter-based stream, so the result does not depend on scheduling.
pub fn fit_forest(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    check_training(x, y, n_classes)?;
    if params.n_trees == 0 {
        return Err(ModelError::InvalidParams("n_trees must be at least 1".into()));
    }
    let n = x.rows();
    let k = params.max_features.resolve(x.n_features());
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let strategy = match params.mode {
                ForestMode::RandomForest => SplitStrategy::Subsampled {
                    max_features: k,
                    rng: &mut rng,
                },
                ForestMode::ExtraTrees => SplitStrategy::RandomThreshold {
                    max_features: k,
                    rng: &mut rng,
                },
            };
            TreeBuilder {
                x,
                y,
                n_classes,
                params: &params.tree,
                strategy,
            }
            .build(samples, 0)
        })
        .collect();
    Ok(ForestModel {
        trees,
        mode: params.mode,
        feature_subsample: k,
        bootstrap: params.bootstrap,
        seed,
        n_features: x.n_features(),
        n_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_rounds_up() {
        assert_eq!(MaxFeatures::Sqrt.resolve(784), 28);
        assert_eq!(MaxFeatures::Sqrt.resolve(24), 5);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
        assert_eq!(MaxFeatures::Count(50).resolve(10), 10);
    }

    #[test]
    fn disagreeing_trees_average() {
        let forest = ForestModel {
            trees: vec![
                TreeNode::Leaf { probs: vec![1.0, 0.0] },
                TreeNode::Leaf { probs: vec![0.0, 1.0] },
            ],
            mode: ForestMode::RandomForest,
            feature_subsample: 1,
            bootstrap: false,
            seed: 0,
            n_features: 1,
            n_classes: 2,
        };
        assert_eq!(forest.predict_proba(&[0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(forest.predict(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn zero_trees_rejected() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let params = ForestParams {
            n_trees: 0,
            ..ForestParams::default()
        };
        assert!(fit_forest(&x, &[0, 1], 2, &params, 0).is_err());
    }
}
