use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// `folds[f]` lists the sample indices tested in fold `f`, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub folds: Vec<Vec<usize>>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Indices outside fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }
}

/// Stratified k-fold split of `labels` (class indices). Members of each
/// class, in ascending class order, are shuffled with one seeded stream and
/// dealt round-robin; each class starts on the fold after the one where the
/// previous class stopped, which keeps total fold sizes level.
pub fn stratified_kfold(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidArgument(format!("k = {k}; need at least 2 folds")));
    }
    let mut members = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members
            .get_mut(l)
            .ok_or_else(|| EvalError::UnknownLabel(l.to_string()))?
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (class, mut m) in members.into_iter().enumerate() {
        if m.is_empty() {
            continue;
        }
        if m.len() < k {
            return Err(EvalError::ClassTooSmall {
                class,
                count: m.len(),
                k,
            });
        }
        m.shuffle(&mut rng);
        for i in m {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(FoldAssignment { folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_and_ten() {
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let f = stratified_kfold(&labels, 2, 5, 1).unwrap();
        for fold in &f.folds {
            assert_eq!(fold.iter().filter(|&&i| labels[i] == 0).count(), 2);
            assert_eq!(fold.iter().filter(|&&i| labels[i] == 1).count(), 2);
        }
    }

    #[test]
    fn eleven_in_five() {
        let f = stratified_kfold(&[0; 11], 1, 5, 9).unwrap();
        let mut sizes: Vec<usize> = f.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn seeded() {
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        assert_eq!(
            stratified_kfold(&labels, 3, 5, 4).unwrap(),
            stratified_kfold(&labels, 3, 5, 4).unwrap()
        );
        assert_ne!(
            stratified_kfold(&labels, 3, 5, 4).unwrap(),
            stratified_kfold(&labels, 3, 5, 5).unwrap()
        );
    }

    #[test]
    fn small_class_rejected() {
        assert!(matches!(
            stratified_kfold(&[0, 0, 0, 1, 1, 1, 1, 1], 2, 5, 0),
            Err(EvalError::ClassTooSmall {
                class: 0,
                count: 3,
                k: 5
            })
        ));
    }
}
