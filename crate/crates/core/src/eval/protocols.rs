use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    stratified_kfold, ConfusionMatrix, EvalData, EvalError, FoldAssignment, MetricsReport, ModelPlugin, PluginJob,
    Target, Task,
};
use crate::dataset::Label;
use crate::models::argmax;

/// Malware family order of the incremental test on the MTA-based dataset.
pub const MTAB_FAMILY_ORDER: [&str; 8] = [
    "Dridex",
    "Emotet",
    "Hancitor",
    "Valak",
    "Bazarloader",
    "Icedid",
    "Zloader",
    "Qakbot",
];

/// Malware family order of the incremental test on the USTC-based dataset.
pub const USTCB_FAMILY_ORDER: [&str; 9] = [
    "Cridex", "Geodo", "Htbot", "Shifu", "Zeus", "Miuref", "Neris", "Nsis", "Virut",
];

/// Independent seed for sub-run `stream` of an experiment seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Per-sample outcome, for the optional predictions CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub session_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    pub truth: String,
    pub predicted: String,
    pub probs: Vec<f64>,
}

/// Train on `train`, predict `test`; returns probabilities and hard labels.
fn fit_predict(
    plugin: &ModelPlugin,
    train: &EvalData,
    train_y: &[usize],
    test: &EvalData,
    classes: &[String],
    target: Target,
    seed: u64,
    context: &str,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), EvalError> {
    let meta = train.tensor_labels();
    let job = PluginJob {
        train_x: &train.x,
        train_y,
        train_meta: &meta,
        test_x: &test.x,
        test_ids: &test.ids,
        classes,
        target,
        seed,
        context,
    };
    let probs = plugin.fit_predict(&job)?;
    if probs.len() != test.len() || probs.iter().any(|p| p.len() != classes.len()) {
        return Err(EvalError::Plugin {
            context: context.to_string(),
            message: format!("expected {} rows of {} probabilities", test.len(), classes.len()),
        });
    }
    let pred = probs.iter().map(|p| argmax(p)).collect();
    Ok((probs, pred))
}

fn target_of(task: Task) -> Target {
    match task {
        Task::Binary => Target::Label,
        Task::Family => Target::Family,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub task: Task,
    pub classes: Vec<String>,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<MetricsReport>,
    /// Unweighted fold mean; its confusion matrix is the fold sum.
    pub mean: MetricsReport,
    /// Session ids tested in each fold.
    pub fold_members: Vec<Vec<String>>,
    #[serde(skip)]
    pub predictions: Vec<SamplePrediction>,
}

/// Stratified k-fold cross-validation. Folds depend only on the task's
/// labels and `seed`, so different models see the same folds. Fold `f`
/// trains with seed `derive_seed(seed, f)`.
pub fn run_cv(data: &EvalData, plugin: &ModelPlugin, task: Task, k: usize, seed: u64) -> Result<CvResult, EvalError> {
    if task == Task::Family {
        let n = data.malware_families().len();
        if n < 2 {
            return Err(EvalError::TooFewClasses { task, found: n });
        }
    }
    cv_unchecked(data, plugin, task, k, seed)
}

fn cv_unchecked(data: &EvalData, plugin: &ModelPlugin, task: Task, k: usize, seed: u64) -> Result<CvResult, EvalError> {
    let (view, classes, y) = data.task_view(task);
    let folds: FoldAssignment = stratified_kfold(&y, classes.len(), k, seed)?;
    let per_fold: Vec<(MetricsReport, Vec<SamplePrediction>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_idx = folds.train_indices(f);
            let test_idx = &folds.folds[f];
            let train = view.subset(&train_idx);
            let test = view.subset(test_idx);
            let train_y: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
            let test_y: Vec<usize> = test_idx.iter().map(|&i| y[i]).collect();
            let context = format!("{} cv fold {f}", task.as_str());
            let (probs, pred) = fit_predict(
                plugin,
                &train,
                &train_y,
                &test,
                &classes,
                target_of(task),
                derive_seed(seed, f as u64),
                &context,
            )?;
            let mut report =
                MetricsReport::from_confusion(ConfusionMatrix::from_indices(classes.clone(), &test_y, &pred)?);
            report.fold = Some(f);
            report.seed = Some(seed);
            let samples = (0..test.len())
                .map(|i| SamplePrediction {
                    session_id: test.ids[i].clone(),
                    fold: Some(f),
                    truth: classes[test_y[i]].clone(),
                    predicted: classes[pred[i]].clone(),
                    probs: probs[i].clone(),
                })
                .collect();
            Ok((report, samples))
        })
        .collect::<Result<_, EvalError>>()?;
    let (reports, samples): (Vec<_>, Vec<_>) = per_fold.into_iter().unzip();
    let mut mean = MetricsReport::mean_of(&reports).expect("k >= 2");
    mean.seed = Some(seed);
    Ok(CvResult {
        task,
        classes,
        k,
        seed,
        fold_members: folds
            .folds
            .iter()
            .map(|f| f.iter().map(|&i| view.ids[i].clone()).collect())
            .collect(),
        folds: reports,
        mean,
        predictions: samples.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ZeroDayOptions {
    /// Also hold out a seeded fifth of the benign sessions and score the
    /// combined test set.
    pub two_sided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroDayResult {
    pub family: String,
    /// Fraction of the held-out family's sessions predicted malware.
    pub accuracy: f64,
    pub detected: usize,
    pub n_test: usize,
    pub n_train: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_sided: Option<MetricsReport>,
    #[serde(skip)]
    pub predictions: Vec<SamplePrediction>,
}

/// Leave-one-family-out test: train benign vs malware without `family`,
/// then measure how much of `family` is flagged malicious.
pub fn run_zero_day(
    data: &EvalData,
    plugin: &ModelPlugin,
    family: &str,
    seed: u64,
    options: ZeroDayOptions,
) -> Result<ZeroDayResult, EvalError> {
    if !data.has_family(family) {
        return Err(EvalError::UnknownFamily {
            family: family.to_string(),
            dataset: data.name.clone(),
        });
    }
    let held = |i: usize| data.labels[i] == Label::Malware && data.families[i] == family;
    let mut test_idx: Vec<usize> = (0..data.len()).filter(|&i| held(i)).collect();
    let mut train_idx: Vec<usize> = (0..data.len()).filter(|&i| !held(i)).collect();
    if options.two_sided {
        let benign: Vec<usize> = train_idx
            .iter()
            .copied()
            .filter(|&i| data.labels[i] == Label::Benign)
            .collect();
        let take = benign.len() / 5;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
        let out: HashSet<usize> = sample(&mut rng, benign.len(), take)
            .into_iter()
            .map(|j| benign[j])
            .collect();
        train_idx.retain(|i| !out.contains(i));
        test_idx.extend(out);
        test_idx.sort_unstable();
    }
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);

    let train_ids: HashSet<&String> = train.ids.iter().collect();
    if test.ids.iter().any(|id| train_ids.contains(id)) {
        return Err(EvalError::Leakage(
            "a test session id is also in the training set".into(),
        ));
    }
    if (0..train.len()).any(|i| train.labels[i] == Label::Malware && train.families[i] == family) {
        return Err(EvalError::Leakage(format!("training set contains {family}")));
    }
    let benign_in_train = train.count(Label::Benign);
    if benign_in_train == 0 || benign_in_train == train.len() {
        return Err(EvalError::TooFewClasses {
            task: Task::Binary,
            found: 1,
        });
    }

    let classes = vec![Label::Benign.to_string(), Label::Malware.to_string()];
    let train_y: Vec<usize> = train.labels.iter().map(|l| l.index()).collect();
    let test_y: Vec<usize> = test.labels.iter().map(|l| l.index()).collect();
    let context = format!("zero-day {family}");
    let (probs, pred) = fit_predict(plugin, &train, &train_y, &test, &classes, Target::Label, seed, &context)?;

    let family_rows: Vec<usize> = (0..test.len()).filter(|&i| test.labels[i] == Label::Malware).collect();
    let detected = family_rows
        .iter()
        .filter(|&&i| pred[i] == Label::Malware.index())
        .count();
    let two_sided = if options.two_sided {
        Some(MetricsReport::from_confusion(ConfusionMatrix::from_indices(
            classes.clone(),
            &test_y,
            &pred,
        )?))
    } else {
        None
    };
    Ok(ZeroDayResult {
        family: family.to_string(),
        accuracy: detected as f64 / family_rows.len() as f64,
        detected,
        n_test: family_rows.len(),
        n_train: train.len(),
        seed,
        two_sided,
        predictions: (0..test.len())
            .map(|i| SamplePrediction {
                session_id: test.ids[i].clone(),
                fold: None,
                truth: classes[test_y[i]].clone(),
                predicted: classes[pred[i]].clone(),
                probs: probs[i].clone(),
            })
            .collect(),
    })
}

/// [`run_zero_day`] for every malware family, in parallel.
pub fn run_zero_day_all(
    data: &EvalData,
    plugin: &ModelPlugin,
    seed: u64,
    options: ZeroDayOptions,
) -> Result<Vec<ZeroDayResult>, EvalError> {
    data.malware_families()
        .par_iter()
        .map(|f| run_zero_day(data, plugin, f, seed, options))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncrementalTask {
    Binary,
    Family,
    Both,
}

impl IncrementalTask {
    fn binary(self) -> bool {
        self != IncrementalTask::Family
    }

    fn family(self) -> bool {
        self != IncrementalTask::Binary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementalOptions {
    pub task: IncrementalTask,
    pub k: usize,
    /// Downsample benign to the current malware total at each step. Benign
    /// is never upsampled, so a step with more malware than benign stays
    /// unbalanced.
    pub rebalance: bool,
}

impl Default for IncrementalOptions {
    fn default() -> Self {
        IncrementalOptions {
            task: IncrementalTask::Both,
            k: 5,
            rebalance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalStep {
    pub step: usize,
    pub families: Vec<String>,
    pub n_benign: usize,
    pub n_malware: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binary_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_accuracy: Option<f64>,
}

/// Add malware families one at a time in `order`; step `i` (1-based)
/// cross-validates benign plus the first `i` families. Step `i` uses
/// `derive_seed(seed, i)`.
pub fn run_incremental(
    data: &EvalData,
    plugin: &ModelPlugin,
    order: &[String],
    seed: u64,
    options: IncrementalOptions,
) -> Result<Vec<IncrementalStep>, EvalError> {
    let mut seen = HashSet::new();
    for f in order {
        if !data.has_family(f) {
            return Err(EvalError::UnknownFamily {
                family: f.clone(),
                dataset: data.name.clone(),
            });
        }
        if !seen.insert(f) {
            return Err(EvalError::InvalidArgument(format!("family {f} listed twice")));
        }
    }
    (1..=order.len())
        .map(|step| {
            let step_seed = derive_seed(seed, step as u64);
            let included: HashSet<&String> = order[..step].iter().collect();
            let mut subset = data.filter(|i| data.labels[i] == Label::Benign || included.contains(&data.families[i]));
            let n_malware = subset.count(Label::Malware);
            let n_benign = subset.count(Label::Benign);
            if options.rebalance && n_benign > n_malware {
                let benign: Vec<usize> = (0..subset.len())
                    .filter(|&i| subset.labels[i] == Label::Benign)
                    .collect();
                let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
                let keep: HashSet<usize> = sample(&mut rng, benign.len(), n_malware)
                    .into_iter()
                    .map(|j| benign[j])
                    .collect();
                subset = subset.filter(|i| subset.labels[i] == Label::Malware || keep.contains(&i));
            }
            let binary_accuracy = if options.task.binary() {
                Some(
                    cv_unchecked(&subset, plugin, Task::Binary, options.k, step_seed)?
                        .mean
                        .accuracy,
                )
            } else {
                None
            };
            let family_accuracy = if options.task.family() {
                Some(
                    cv_unchecked(&subset, plugin, Task::Family, options.k, step_seed)?
                        .mean
                        .accuracy,
                )
            } else {
                None
            };
            Ok(IncrementalStep {
                step,
                families: order[..step].to_vec(),
                n_benign: subset.count(Label::Benign),
                n_malware,
                binary_accuracy,
                family_accuracy,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossResult {
    pub train_dataset: String,
    pub test_dataset: String,
    pub train_family: String,
    pub test_family: String,
    /// Fraction of the test dataset's family sessions predicted malware.
    pub accuracy: f64,
    pub detected: usize,
    pub n_test: usize,
    pub seed: u64,
    #[serde(skip)]
    pub predictions: Vec<SamplePrediction>,
}

/// Train benign vs malware on all of `train`, then score the sessions of
/// `test_family` in `test`. `train_family` names the paired family in the
/// training data and must be present there.
pub fn run_cross_dataset(
    train: &EvalData,
    test: &EvalData,
    plugin: &ModelPlugin,
    train_family: &str,
    test_family: &str,
    seed: u64,
) -> Result<CrossResult, EvalError> {
    for (d, f) in [(train, train_family), (test, test_family)] {
        if !d.has_family(f) {
            return Err(EvalError::UnknownFamily {
                family: f.to_string(),
                dataset: d.name.clone(),
            });
        }
    }
    let target = test.filter(|i| test.labels[i] == Label::Malware && test.families[i] == test_family);
    let classes = vec![Label::Benign.to_string(), Label::Malware.to_string()];
    let train_y: Vec<usize> = train.labels.iter().map(|l| l.index()).collect();
    let context = format!("cross {}:{train_family} -> {}:{test_family}", train.name, test.name);
    let (probs, pred) = fit_predict(
        plugin,
        train,
        &train_y,
        &target,
        &classes,
        Target::Label,
        seed,
        &context,
    )?;
    let detected = pred.iter().filter(|&&p| p == Label::Malware.index()).count();
    Ok(CrossResult {
        train_dataset: train.name.clone(),
        test_dataset: test.name.clone(),
        train_family: train_family.to_string(),
        test_family: test_family.to_string(),
        accuracy: detected as f64 / target.len() as f64,
        detected,
        n_test: target.len(),
        seed,
        predictions: (0..target.len())
            .map(|i| SamplePrediction {
                session_id: target.ids[i].clone(),
                fold: None,
                truth: Label::Malware.to_string(),
                predicted: classes[pred[i]].clone(),
                probs: probs[i].clone(),
            })
            .collect(),
    })
}
