use serde::{Deserialize, Serialize};

use super::EvalError;

/// `counts[i][j]`: test samples of true class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// A non-negative fraction kept as integers; `0/0` reads as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn value(self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }
}

impl BinaryCounts {
    pub fn precision(self) -> Fraction {
        Fraction {
            num: self.tp,
            den: self.tp + self.fp,
        }
    }

    pub fn recall(self) -> Fraction {
        Fraction {
            num: self.tp,
            den: self.tp + self.fn_,
        }
    }

    /// Harmonic mean of precision and recall, `2TP / (2TP + FP + FN)`.
    pub fn f1(self) -> Fraction {
        Fraction {
            num: 2 * self.tp,
            den: 2 * self.tp + self.fp + self.fn_,
        }
    }

    /// `(TP + TN) / total`
    pub fn accuracy(self) -> Fraction {
        Fraction {
            num: self.tp + self.tn,
            den: self.tp + self.tn + self.fp + self.fn_,
        }
    }
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    /// Build from class indices.
    pub fn from_indices(classes: Vec<String>, truth: &[usize], pred: &[usize]) -> Result<Self, EvalError> {
        if truth.len() != pred.len() {
            return Err(EvalError::LengthMismatch {
                truth: truth.len(),
                pred: pred.len(),
            });
        }
        let mut m = ConfusionMatrix::new(classes);
        for (&t, &p) in truth.iter().zip(pred) {
            for c in [t, p] {
                if c >= m.classes.len() {
                    return Err(EvalError::UnknownLabel(c.to_string()));
                }
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Test samples of each true class.
    pub fn support(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn binary_counts(&self, class: usize) -> BinaryCounts {
        let tp = self.counts[class][class];
        let row: u64 = self.counts[class].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[class]).sum();
        BinaryCounts {
            tp,
            fp: col - tp,
            fn_: row - tp,
            tn: self.total() + tp - row - col,
        }
    }

    pub fn accuracy(&self) -> Fraction {
        Fraction {
            num: self.trace(),
            den: self.total(),
        }
    }

    /// Micro-averaged recall: summed TP over summed TP + FN.
    pub fn micro_recall(&self) -> Fraction {
        let (tp, fn_) = (0..self.n_classes())
            .map(|c| self.binary_counts(c))
            .fold((0, 0), |(a, b), k| (a + k.tp, b + k.fn_));
        Fraction { num: tp, den: tp + fn_ }
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One-vs-rest accuracy, `(TP + TN) / total`.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fingerprint: Option<String>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let per_class: Vec<ClassMetrics> = (0..confusion.n_classes())
            .map(|c| {
                let k = confusion.binary_counts(c);
                ClassMetrics {
                    class: confusion.classes[c].clone(),
                    support: k.tp + k.fn_,
                    precision: k.precision().value(),
                    recall: k.recall().value(),
                    f1: k.f1().value(),
                    accuracy: k.accuracy().value(),
                }
            })
            .collect();
        MetricsReport {
            accuracy: confusion.accuracy().value(),
            macro_precision: mean(per_class.iter().map(|m| m.precision)),
            macro_recall: mean(per_class.iter().map(|m| m.recall)),
            macro_f1: mean(per_class.iter().map(|m| m.f1)),
            per_class,
            confusion,
            fold: None,
            seed: None,
            fingerprint: None,
        }
    }

    /// Unweighted mean of several reports over the same classes; the
    /// confusion matrix is the sum.
    pub fn mean_of(reports: &[MetricsReport]) -> Option<Self> {
        let first = reports.first()?;
        let mut confusion = ConfusionMatrix::new(first.confusion.classes.clone());
        reports.iter().for_each(|r| confusion.add(&r.confusion));
        let per_class = (0..first.per_class.len())
            .map(|c| ClassMetrics {
                class: first.per_class[c].class.clone(),
                support: reports.iter().map(|r| r.per_class[c].support).sum(),
                precision: mean(reports.iter().map(|r| r.per_class[c].precision)),
                recall: mean(reports.iter().map(|r| r.per_class[c].recall)),
                f1: mean(reports.iter().map(|r| r.per_class[c].f1)),
                accuracy: mean(reports.iter().map(|r| r.per_class[c].accuracy)),
            })
            .collect();
        Some(MetricsReport {
            accuracy: mean(reports.iter().map(|r| r.accuracy)),
            per_class,
            macro_precision: mean(reports.iter().map(|r| r.macro_precision)),
            macro_recall: mean(reports.iter().map(|r| r.macro_recall)),
            macro_f1: mean(reports.iter().map(|r| r.macro_f1)),
            confusion,
            fold: None,
            seed: first.seed,
            fingerprint: first.fingerprint.clone(),
        })
    }
}

/// Metrics for string labels drawn from `classes`.
pub fn compute_metrics<S: AsRef<str>>(truth: &[S], pred: &[S], classes: &[String]) -> Result<MetricsReport, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let index = |s: &S| {
        classes
            .iter()
            .position(|c| c == s.as_ref())
            .ok_or_else(|| EvalError::UnknownLabel(s.as_ref().to_string()))
    };
    let t = truth.iter().map(index).collect::<Result<Vec<_>, _>>()?;
    let p = pred.iter().map(index).collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport::from_confusion(ConfusionMatrix::from_indices(
        classes.to_vec(),
        &t,
        &p,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_predictions() {
        let c = classes(&["a", "b", "c"]);
        let y = ["a", "b", "c", "a"];
        let m = compute_metrics(&y, &y, &c).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.per_class.iter().all(|k| k.f1 == 1.0));
    }

    #[test]
    fn one_tp_one_fp() {
        // positive class "m": TP=1, FP=1, FN=0, TN=0
        let c = classes(&["b", "m"]);
        let m = compute_metrics(&["m", "b"], &["m", "m"], &c).unwrap();
        let k = &m.per_class[1];
        assert_eq!(k.precision, 0.5);
        assert_eq!(k.recall, 1.0);
        assert_eq!(k.f1, 2.0 / 3.0);
        assert_eq!(m.per_class[0].f1, 0.0);
    }

    #[test]
    fn errors() {
        let c = classes(&["a"]);
        assert!(matches!(
            compute_metrics(&["a"], &["a", "a"], &c),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            compute_metrics(&["a"], &["z"], &c),
            Err(EvalError::UnknownLabel(_))
        ));
    }

    #[test]
    fn fold_mean_is_unweighted() {
        let c = classes(&["a", "b"]);
        let r1 = compute_metrics(&["a", "b"], &["a", "b"], &c).unwrap();
        let r2 = compute_metrics(&["a", "b", "a", "b"], &["b", "b", "b", "b"], &c).unwrap();
        let m = MetricsReport::mean_of(&[r1, r2]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.confusion.total(), 6);
        assert_eq!(m.confusion.counts, vec![vec![1, 2], vec![0, 3]]);
    }
}
