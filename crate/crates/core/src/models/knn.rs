use std::cmp::Ordering;

use super::{check_dims, check_training, Classifier, ModelError};
use crate::features::FeatureMatrix;

/// Brute-force k-nearest-neighbour classifier under Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub x: FeatureMatrix,
    pub y: Vec<usize>,
    pub k: usize,
    pub n_classes: usize,
}

pub fn fit_knn(x: &FeatureMatrix, y: &[usize], n_classes: usize, k: usize) -> Result<KnnModel, ModelError> {
    check_training(x, y, n_classes)?;
    if k == 0 || k > x.rows() {
        return Err(ModelError::InvalidParams(format!(
            "k = {k} must lie in 1..={}",
            x.rows()
        )));
    }
    Ok(KnnModel {
        x: x.clone(),
        y: y.to_vec(),
        k,
        n_classes,
    })
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| {
            let d = f64::from(p) - f64::from(q);
            d * d
        })
        .sum()
}

impl KnnModel {
    /// Training indices of the `k` nearest points, nearest first. Equal
    /// distances are ordered by training index.
    pub fn neighbours(&self, x: &[f32]) -> Result<Vec<usize>, ModelError> {
        check_dims(self.x.n_features(), x)?;
        let mut d: Vec<(f64, usize)> = (0..self.x.rows()).map(|i| (sq_dist(self.x.row(i), x), i)).collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering { a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) };
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }
}

impl Classifier for KnnModel {
    fn n_features(&self) -> usize {
        self.x.n_features()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Label frequencies among the `k` nearest training points.
    fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>, ModelError> {
        let mut counts = vec![0usize; self.n_classes];
        for i in self.neighbours(x)? {
            counts[self.y[i]] += 1;
        }
        Ok(counts.iter().map(|&c| c as f64 / self.k as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f32]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn exact_match_with_k1() {
        let x = m(&[&[0.0, 0.0], &[5.0, 5.0]]);
        let knn = fit_knn(&x, &[0, 1], 2, 1).unwrap();
        assert_eq!(knn.predict(&[5.0, 5.0]).unwrap(), 1);
    }

    #[test]
    fn frequency_of_three_neighbours() {
        let x = m(&[&[0.0], &[1.0], &[2.0], &[100.0]]);
        let knn = fit_knn(&x, &[0, 0, 1, 1], 2, 3).unwrap();
        let p = knn.predict_proba(&[0.5]).unwrap();
        assert_eq!(p, vec![2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn distance_ties_use_training_index() {
        // both points are at distance 1; the lower index wins
        let x = m(&[&[1.0], &[-1.0]]);
        let knn = fit_knn(&x, &[1, 0], 2, 1).unwrap();
        assert_eq!(knn.neighbours(&[0.0]).unwrap(), vec![0]);
        assert_eq!(knn.predict(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn k_bounds() {
        let x = m(&[&[1.0]]);
        assert!(fit_knn(&x, &[0], 1, 0).is_err());
        assert!(fit_knn(&x, &[0], 1, 2).is_err());
    }
}
