use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::{Label, LabeledCorpus};
use crate::features::{
    featurize, read_label_file, read_tensor_file, write_label_file, write_tensor_file, ExtractorConfig, FeatureMatrix,
    Representation, TensorLabel,
};

/// Feature rows with their session ids, labels and families.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalData {
    pub name: String,
    pub x: FeatureMatrix,
    pub ids: Vec<String>,
    pub labels: Vec<Label>,
    pub families: Vec<String>,
}

/// Classification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Benign vs malware over every session.
    Binary,
    /// Malware family over malware sessions only.
    Family,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Family => "family",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "binary" => Ok(Task::Binary),
            "family" => Ok(Task::Family),
            _ => Err(format!("unknown task {s:?} (expected binary or family)")),
        }
    }
}

impl EvalData {
    pub fn from_corpus(
        corpus: &LabeledCorpus,
        repr: Representation,
        config: &ExtractorConfig,
    ) -> Result<Self, EvalError> {
        let x = featurize(corpus.sessions.par_iter().map(|s| &s.session), repr, config)?;
        Ok(EvalData {
            name: corpus.name.clone(),
            x,
            ids: corpus.sessions.iter().map(|s| s.session_id.to_hex()).collect(),
            labels: corpus.sessions.iter().map(|s| s.label).collect(),
            families: corpus.sessions.iter().map(|s| s.family.clone()).collect(),
        })
    }

    /// Load a tensor file and its label file.
    pub fn from_files(
        name: impl Into<String>,
        tensors: impl AsRef<Path>,
        labels: impl AsRef<Path>,
    ) -> Result<Self, EvalError> {
        let x = read_tensor_file(tensors)?;
        let rows = read_label_file(labels)?;
        if rows.len() != x.rows() {
            return Err(EvalError::InvalidArgument(format!(
                "{} tensors but {} label rows",
                x.rows(),
                rows.len()
            )));
        }
        let labels = rows
            .iter()
            .map(|r| r.label.parse::<Label>().map_err(EvalError::UnknownLabel))
            .collect::<Result<_, _>>()?;
        Ok(EvalData {
            name: name.into(),
            x,
            ids: rows.iter().map(|r| r.session_id.clone()).collect(),
            labels,
            families: rows.into_iter().map(|r| r.family).collect(),
        })
    }

    pub fn save(&self, tensors: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<(), EvalError> {
        write_tensor_file(tensors, &self.x)?;
        write_label_file(labels, &self.tensor_labels())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn tensor_labels(&self) -> Vec<TensorLabel> {
        (0..self.len()).map(|i| self.tensor_label(i)).collect()
    }

    pub fn tensor_label(&self, i: usize) -> TensorLabel {
        TensorLabel {
            session_id: self.ids[i].clone(),
            label: self.labels[i].as_str().to_string(),
            family: self.families[i].clone(),
        }
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> EvalData {
        EvalData {
            name: self.name.clone(),
            x: self.x.select(idx),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            families: idx.iter().map(|&i| self.families[i].clone()).collect(),
        }
    }

    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> EvalData {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.subset(&idx)
    }

    /// Sorted malware family names.
    pub fn malware_families(&self) -> Vec<String> {
        (0..self.len())
            .filter(|&i| self.labels[i] == Label::Malware)
            .map(|i| self.families[i].clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn has_family(&self, family: &str) -> bool {
        (0..self.len()).any(|i| self.labels[i] == Label::Malware && self.families[i] == family)
    }

    /// Rows used by `task`, its class names, and each row's class index.
    pub fn task_view(&self, task: Task) -> (EvalData, Vec<String>, Vec<usize>) {
        match task {
            Task::Binary => {
                let classes = vec![Label::Benign.to_string(), Label::Malware.to_string()];
                let y = self.labels.iter().map(|l| l.index()).collect();
                (self.clone(), classes, y)
            }
            Task::Family => {
                let view = self.filter(|i| self.labels[i] == Label::Malware);
                let classes = view.malware_families();
                let y = view
                    .families
                    .iter()
                    .map(|f| classes.binary_search(f).unwrap())
                    .collect();
                (view, classes, y)
            }
        }
    }
}
