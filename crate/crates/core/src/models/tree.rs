use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dims, check_training, Classifier, ModelError};
use crate::features::FeatureMatrix;

/// A node of a fitted tree. Samples go left iff `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        probs: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn leaf_probs(&self, x: &[f32]) -> &[f64] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { probs } => return probs,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if f64::from(x[*feature]) <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

/// CART classification tree grown with the Gini criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Classifier for DecisionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>, ModelError> {
        check_dims(self.n_features, x)?;
        Ok(self.root.leaf_probs(x).to_vec())
    }
}

/// Fit a tree on every sample, considering every feature at every node.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// The split with the largest Gini decrease wins; ties go to the lowest
/// feature index, then the lowest threshold. A node becomes a leaf when it
/// is pure, holds fewer than `min_samples_split` samples, sits at
/// `max_depth`, or no feature takes two distinct values. Zero-decrease
/// splits are accepted, so parity-style labelings such as XOR still reach
/// pure leaves.
pub fn fit_tree(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &TreeParams,
) -> Result<DecisionTree, ModelError> {
    check_training(x, y, n_classes)?;
    let samples: Vec<usize> = (0..x.rows()).collect();
    let root = TreeBuilder {
        x,
        y,
        n_classes,
        params,
        strategy: SplitStrategy::Exhaustive,
    }
    .build(samples, 0);
    Ok(DecisionTree {
        root,
        n_features: x.n_features(),
        n_classes,
    })
}

/// How a node searches for its split.
pub(crate) enum SplitStrategy<'r> {
    /// All features, best midpoint threshold.
    Exhaustive,
    /// `max_features` randomly chosen features, best midpoint threshold.
    /// If none of them can split the node, further features are drawn one
    /// at a time until one can.
    Subsampled {
        max_features: usize,
        rng: &'r mut ChaCha8Rng,
    },
    /// Like `Subsampled`, but each feature gets one uniformly random
    /// threshold in `[min, max)` instead of a search.
    RandomThreshold {
        max_features: usize,
        rng: &'r mut ChaCha8Rng,
    },
}

pub(crate) struct TreeBuilder<'a, 'r> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [usize],
    pub n_classes: usize,
    pub params: &'a TreeParams,
    pub strategy: SplitStrategy<'r>,
}

/// Partition quality `sum(cL^2)/nL + sum(cR^2)/nR` held as an exact
/// fraction; larger is better. Maximizing it is equivalent to maximizing
/// the Gini decrease.
#[derive(Clone, Copy, Debug)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(sum_sq_left: u64, n_left: u64, sum_sq_right: u64, n_right: u64) -> Self {
        Score {
            num: u128::from(sum_sq_left) * u128::from(n_right) + u128::from(sum_sq_right) * u128::from(n_left),
            den: u128::from(n_left) * u128::from(n_right),
        }
    }

    fn beats(&self, other: &Score) -> bool {
        self.num * other.den > other.num * self.den
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    feature: usize,
    threshold: f64,
    score: Score,
}

fn sum_sq(counts: &[u64]) -> u64 {
    counts.iter().map(|c| c * c).sum()
}

impl TreeBuilder<'_, '_> {
    fn class_counts(&self, samples: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_classes];
        for &i in samples {
            counts[self.y[i]] += 1;
        }
        counts
    }

    pub fn build(&mut self, samples: Vec<usize>, depth: usize) -> TreeNode {
        let counts = self.class_counts(&samples);
        let n = samples.len() as u64;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let at_depth = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || samples.len() < self.params.min_samples_split.max(2) || at_depth {
            return leaf(&counts);
        }
        let parent = Score {
            num: u128::from(sum_sq(&counts)),
            den: u128::from(n),
        };
        let Some(best) = self.find_split(&samples, &parent) else {
            return leaf(&counts);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| f64::from(self.x.row(i)[best.feature]) <= best.threshold);
        let left = self.build(left, depth + 1);
        let right = self.build(right, depth + 1);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn find_split(&mut self, samples: &[usize], parent: &Score) -> Option<Candidate> {
        let d = self.x.n_features();
        // Children never have higher weighted impurity than the parent;
        // equality is allowed.
        let improves = |c: &Candidate| !parent.beats(&c.score);
        let (k, random_threshold) = match &self.strategy {
            SplitStrategy::Exhaustive => (d, false),
            SplitStrategy::Subsampled { max_features, .. } => ((*max_features).clamp(1, d), false),
            SplitStrategy::RandomThreshold { max_features, .. } => ((*max_features).clamp(1, d), true),
        };
        let mut order: Vec<usize> = (0..d).collect();
        if k < d {
            order.shuffle(self.rng());
        }
        let (first, rest) = order.split_at_mut(k);
        first.sort_unstable();
        let mut best: Option<Candidate> = None;
        for &f in first.iter() {
            let c = self.evaluate(samples, f, random_threshold);
            best = better(best, c);
        }
        if let Some(b) = best.filter(improves) {
            return Some(b);
        }
        for &f in rest.iter() {
            if let Some(c) = self.evaluate(samples, f, random_threshold).filter(improves) {
                return Some(c);
            }
        }
        None
    }

    fn evaluate(&mut self, samples: &[usize], feature: usize, random_threshold: bool) -> Option<Candidate> {
        if random_threshold {
            self.random_threshold(samples, feature)
        } else {
            self.best_threshold(samples, feature)
        }
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        match &mut self.strategy {
            SplitStrategy::Subsampled { rng, .. } | SplitStrategy::RandomThreshold { rng, .. } => rng,
            SplitStrategy::Exhaustive => unreachable!("exhaustive search draws no randomness"),
        }
    }

    /// Best midpoint threshold on one feature, scanning left to right.
    fn best_threshold(&self, samples: &[usize], feature: usize) -> Option<Candidate> {
        let mut vals: Vec<(f32, usize)> = samples.iter().map(|&i| (self.x.row(i)[feature], self.y[i])).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len() as u64;
        let mut left = vec![0u64; self.n_classes];
        let mut right = self.class_counts(samples);
        let (mut sq_left, mut sq_right) = (0u64, sum_sq(&right));
        let mut best: Option<Candidate> = None;
        for k in 0..vals.len() - 1 {
            let c = vals[k].1;
            sq_left += 2 * left[c] + 1;
            left[c] += 1;
            sq_right -= 2 * right[c] - 1;
            right[c] -= 1;
            let (v, next) = (vals[k].0, vals[k + 1].0);
            if v == next {
                continue;
            }
            let n_left = k as u64 + 1;
            let score = Score::new(sq_left, n_left, sq_right, n - n_left);
            if best.is_none_or(|b| score.beats(&b.score)) {
                best = Some(Candidate {
                    feature,
                    threshold: (f64::from(v) + f64::from(next)) / 2.0,
                    score,
                });
            }
        }
        best
    }

    /// One uniformly drawn threshold in `[min, max)` of the node's values.
    fn random_threshold(&mut self, samples: &[usize], feature: usize) -> Option<Candidate> {
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for &i in samples {
            let v = self.x.row(i)[feature];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo >= hi {
            return None;
        }
        let (lo, hi) = (f64::from(lo), f64::from(hi));
        let mut threshold = lo + self.rng().random::<f64>() * (hi - lo);
        if threshold >= hi {
            threshold = lo;
        }
        let mut left = vec![0u64; self.n_classes];
        let mut right = vec![0u64; self.n_classes];
        for &i in samples {
            if f64::from(self.x.row(i)[feature]) <= threshold {
                left[self.y[i]] += 1;
            } else {
                right[self.y[i]] += 1;
            }
        }
        let (n_left, n_right) = (left.iter().sum(), right.iter().sum());
        Some(Candidate {
            feature,
            threshold,
            score: Score::new(sum_sq(&left), n_left, sum_sq(&right), n_right),
        })
    }
}

fn better(best: Option<Candidate>, challenger: Option<Candidate>) -> Option<Candidate> {
    match (best, challenger) {
        (Some(b), Some(c)) if c.score.beats(&b.score) => Some(c),
        (None, c) => c,
        (b, _) => b,
    }
}

fn leaf(counts: &[u64]) -> TreeNode {
    let n: u64 = counts.iter().sum();
    TreeNode::Leaf {
        probs: counts.iter().map(|&c| c as f64 / n as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::argmax;

    fn matrix(rows: &[&[f32]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_class_is_one_leaf() {
        let x = matrix(&[&[1.0], &[2.0], &[3.0]]);
        let t = fit_tree(&x, &[1, 1, 1], 2, &TreeParams::default()).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { probs: vec![0.0, 1.0] });
        assert_eq!(t.predict(&[100.0]).unwrap(), 1);
    }

    #[test]
    fn one_dimensional_split_at_midpoint() {
        let x = matrix(&[&[0.0], &[1.0], &[10.0], &[11.0]]);
        let t = fit_tree(&x, &[0, 0, 1, 1], 2, &TreeParams::default()).unwrap();
        let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = &t.root
        else {
            panic!("expected a split");
        };
        assert_eq!((*feature, *threshold), (0, 5.5));
        assert_eq!(**left, TreeNode::Leaf { probs: vec![1.0, 0.0] });
        assert_eq!(**right, TreeNode::Leaf { probs: vec![0.0, 1.0] });
        // the rule is "<=", so the threshold itself goes left
        assert_eq!(t.predict(&[5.5]).unwrap(), 0);
        assert_eq!(t.predict(&[10.5]).unwrap(), 1);
    }

    #[test]
    fn xor_is_learned_with_depth_two() {
        let x = matrix(&[&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]]);
        let y = [0, 1, 1, 0];
        // Every root split of XOR has zero Gini decrease; the root must
        // still split for the second level to separate the points.
        let t = fit_tree(
            &x,
            &y,
            2,
            &TreeParams {
                max_depth: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(t.root, TreeNode::Split { feature: 0, threshold, .. } if threshold == 0.5));
        for (i, &label) in y.iter().enumerate() {
            assert_eq!(argmax(&t.predict_proba(x.row(i)).unwrap()), label);
        }
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // features 0 and 1 are identical; the split must use feature 0
        let x = matrix(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let t = fit_tree(&x, &[0, 1], 2, &TreeParams::default()).unwrap();
        assert!(matches!(t.root, TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn max_depth_and_min_samples_respected() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let y = [0, 1, 0, 1];
        let t = fit_tree(
            &x,
            &y,
            2,
            &TreeParams {
                max_depth: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(t.root.depth() <= 1);
        let t = fit_tree(
            &x,
            &y,
            2,
            &TreeParams {
                max_depth: None,
                min_samples_split: 5,
            },
        )
        .unwrap();
        assert_eq!(t.root.depth(), 0);
    }

    #[test]
    fn dimension_mismatch_reported() {
        let x = matrix(&[&[0.0], &[1.0]]);
        let t = fit_tree(&x, &[0, 1], 2, &TreeParams::default()).unwrap();
        assert!(matches!(
            t.predict_proba(&[0.0, 1.0]),
            Err(ModelError::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn empty_training_set() {
        let x = FeatureMatrix::new(vec![3]);
        assert!(matches!(
            fit_tree(&x, &[], 2, &TreeParams::default()),
            Err(ModelError::EmptyTrainingSet)
        ));
    }
}
