use mtc_core::features::FeatureMatrix;
use mtc_core::models::{fit_forest, fit_knn, fit_tree, Classifier, ForestParams, MaxFeatures, TreeNode, TreeParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, levels: u32) -> FeatureMatrix {
    let data: Vec<Vec<f32>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(0..levels) as f32).collect())
        .collect();
    FeatureMatrix::from_rows(&data).unwrap()
}

fn gini_sum(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>()
}

/// Walk the fitted tree with the training rows and check every split lowers
/// (or keeps) weighted impurity and sends samples both ways.
fn check_splits(node: &TreeNode, x: &FeatureMatrix, y: &[usize], idx: &[usize], n_classes: usize) {
    if let TreeNode::Split {
        feature,
        threshold,
        left,
        right,
    } = node
    {
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| f64::from(x.row(i)[*feature]) <= *threshold);
        assert!(!l.is_empty() && !r.is_empty());
        let counts = |s: &[usize]| {
            let mut c = vec![0; n_classes];
            s.iter().for_each(|&i| c[y[i]] += 1);
            c
        };
        let n = idx.len() as f64;
        let parent = gini_sum(&counts(idx));
        let children = l.len() as f64 / n * gini_sum(&counts(&l)) + r.len() as f64 / n * gini_sum(&counts(&r));
        assert!(children <= parent + 1e-12, "children {children} > parent {parent}");
        check_splits(left, x, y, &l, n_classes);
        check_splits(right, x, y, &r, n_classes);
    }
}

#[test]
fn single_tree_forest_matches_tree_on_probe() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_matrix(&mut rng, 150, 6, 8);
    let y: Vec<usize> = (0..150).map(|_| rng.random_range(0..3)).collect();
    let tree = fit_tree(&x, &y, 3, &TreeParams::default()).unwrap();
    let params = ForestParams {
        n_trees: 1,
        bootstrap: false,
        max_features: MaxFeatures::All,
        ..ForestParams::random_forest()
    };
    let forest = fit_forest(&x, &y, 3, &params, 99).unwrap();
    assert_eq!(forest.trees[0], tree.root);
    let probe = random_matrix(&mut rng, 200, 6, 9);
    for i in 0..probe.rows() {
        assert_eq!(
            forest.predict_proba(probe.row(i)).unwrap(),
            tree.predict_proba(probe.row(i)).unwrap()
        );
    }
}

#[test]
fn forests_are_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_matrix(&mut rng, 120, 10, 16);
    let y: Vec<usize> = (0..120).map(|i| i % 2).collect();
    let probe = random_matrix(&mut rng, 50, 10, 16);
    for params in [ForestParams::random_forest(), ForestParams::extra_trees()] {
        let a = fit_forest(&x, &y, 2, &params, 7).unwrap();
        let b = fit_forest(&x, &y, 2, &params, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict_matrix(&probe).unwrap(), b.predict_matrix(&probe).unwrap());
        let c = fit_forest(&x, &y, 2, &params, 8).unwrap();
        assert_ne!(a.trees, c.trees);
    }
}

fn blobs(seed: u64, per_class: usize) -> (FeatureMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f64, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for class in 0..2 {
        // centres 6 sigma apart along the diagonal
        let c = class as f64 * 6.0 / 2f64.sqrt();
        for _ in 0..per_class {
            rows.push(vec![
                (c + noise.sample(&mut rng)) as f32,
                (c + noise.sample(&mut rng)) as f32,
            ]);
            y.push(class);
        }
    }
    (FeatureMatrix::from_rows(&rows).unwrap(), y)
}

#[test]
fn gaussian_blobs_held_out() {
    let (x, y) = blobs(2024, 100);
    let (tx, ty) = blobs(2025, 100);
    let params = ForestParams {
        n_trees: 25,
        ..ForestParams::random_forest()
    };
    let forest = fit_forest(&x, &y, 2, &params, 3).unwrap();
    let correct = (0..tx.rows())
        .filter(|&i| forest.predict(tx.row(i)).unwrap() == ty[i])
        .count();
    assert!(correct as f64 / tx.rows() as f64 >= 0.99, "{correct}/200");
    let c = 6.0 / 2f32.sqrt();
    assert_eq!(forest.predict(&[0.0, 0.0]).unwrap(), 0);
    assert_eq!(forest.predict(&[c, c]).unwrap(), 1);
}

/// Full sort of all distances, independent of the partial selection in the model.
fn brute_force(x: &FeatureMatrix, y: &[usize], q: &[f32], k: usize, n_classes: usize) -> Vec<f64> {
    let mut all: Vec<(f64, usize)> = (0..x.rows())
        .map(|i| {
            let d = x
                .row(i)
                .iter()
                .zip(q)
                .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
                .sum::<f64>()
                .sqrt();
            (d, i)
        })
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut p = vec![0.0; n_classes];
    for &(_, i) in &all[..k] {
        p[y[i]] += 1.0 / k as f64;
    }
    p
}

#[test]
fn knn_matches_brute_force_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let x = random_matrix(&mut rng, 20, 2, 6);
        let y: Vec<usize> = (0..20).map(|_| rng.random_range(0..3)).collect();
        let knn = fit_knn(&x, &y, 3, 3).unwrap();
        for _ in 0..30 {
            let q = [rng.random_range(0.0..6.0f32), rng.random_range(0.0..6.0f32)];
            let expected = brute_force(&x, &y, &q, 3, 3);
            let got = knn.predict_proba(&q).unwrap();
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_fits_consistent_data(seed in any::<u64>(), rows in 2usize..60, cols in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, rows, cols, 5);
        // label is a function of x, so the data is consistent
        let y: Vec<usize> = (0..rows)
            .map(|i| x.row(i).iter().map(|v| *v as usize).sum::<usize>() % 3)
            .collect();
        let tree = fit_tree(&x, &y, 3, &TreeParams::default()).unwrap();
        for i in 0..rows {
            prop_assert_eq!(tree.predict(x.row(i)).unwrap(), y[i]);
        }
        let idx: Vec<usize> = (0..rows).collect();
        check_splits(&tree.root, &x, &y, &idx, 3);
    }

    #[test]
    fn knn_ignores_training_order(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // continuous coordinates make distance ties vanishingly unlikely
        let rows: Vec<Vec<f32>> = (0..15).map(|_| vec![rng.random::<f32>(), rng.random::<f32>()]).collect();
        let y: Vec<usize> = (0..15).map(|_| rng.random_range(0..2)).collect();
        let mut perm: Vec<usize> = (0..15).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let a = fit_knn(&FeatureMatrix::from_rows(&rows).unwrap(), &y, 2, k).unwrap();
        let prow: Vec<Vec<f32>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let py: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        let b = fit_knn(&FeatureMatrix::from_rows(&prow).unwrap(), &py, 2, k).unwrap();
        for _ in 0..10 {
            let q = [rng.random::<f32>(), rng.random::<f32>()];
            prop_assert_eq!(a.predict_proba(&q).unwrap(), b.predict_proba(&q).unwrap());
        }
    }
}
