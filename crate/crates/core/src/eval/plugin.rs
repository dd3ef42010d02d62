//! How a model takes part in an experiment: natively, or as an external
//! executable speaking the file-and-subprocess plugin contract.
//!
//! ```text
//! <exe> train   --arch <name> --train-x <ftns> --train-y <labels> --model-out <path> --seed <u64> [--config <file>]
//! <exe> predict --model-in <path> --x <ftns> --out <pred-file>
//! ```
//!
//! The harness always passes `--config`, a JSON object holding `target`
//! (`"label"` or `"family"`, the label-file column to learn), `classes`
//! (column order of the prediction file) and any user settings. Beside
//! `--x` it writes `<x>.labels` with the session ids in tensor order and
//! `?` in the label and family columns. The prediction file starts with
//! the header `session_id,p_class0,...` followed by one row per tensor.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::features::{write_label_file, write_tensor_file, FeatureMatrix, TensorLabel};
use crate::models::{Classifier, ModelSpec};

/// Which label-file column a model learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Label,
    Family,
}

/// An external model executable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPlugin {
    pub exe: PathBuf,
    /// Arguments placed before the `train` / `predict` verb, e.g. a script path.
    #[serde(default)]
    pub prefix_args: Vec<String>,
    pub arch: String,
    /// Extra settings merged into the `--config` file.
    #[serde(default)]
    pub config: serde_json::Map<String, serde_json::Value>,
    /// Parent directory for per-job scratch directories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelPlugin {
    Native { spec: ModelSpec },
    External(ExternalPlugin),
}

/// One train-then-predict round.
pub struct PluginJob<'a> {
    pub train_x: &'a FeatureMatrix,
    pub train_y: &'a [usize],
    /// Label-file rows for the training tensors.
    pub train_meta: &'a [TensorLabel],
    pub test_x: &'a FeatureMatrix,
    pub test_ids: &'a [String],
    pub classes: &'a [String],
    pub target: Target,
    pub seed: u64,
    /// Shown in error messages, e.g. `cv fold 3`.
    pub context: &'a str,
}

impl ModelPlugin {
    pub fn native(spec: ModelSpec) -> Self {
        ModelPlugin::Native { spec }
    }

    pub fn name(&self) -> String {
        match self {
            ModelPlugin::Native { spec } => spec.name().to_string(),
            ModelPlugin::External(p) => p.arch.clone(),
        }
    }

    /// Train on the job's training split and return class probabilities
    /// for each test row, columns ordered as `job.classes`.
    pub fn fit_predict(&self, job: &PluginJob) -> Result<Vec<Vec<f64>>, EvalError> {
        match self {
            ModelPlugin::Native { spec } => {
                let model_err = |source| EvalError::Model {
                    context: job.context.to_string(),
                    source,
                };
                let model = spec
                    .fit(job.train_x, job.train_y, job.classes.len(), job.seed)
                    .map_err(model_err)?;
                model.predict_matrix(job.test_x).map_err(model_err)
            }
            ModelPlugin::External(p) => p.fit_predict(job),
        }
    }
}

impl ExternalPlugin {
    fn fail(&self, job: &PluginJob, message: impl Into<String>) -> EvalError {
        EvalError::Plugin {
            context: format!("{} ({})", job.context, self.exe.display()),
            message: message.into(),
        }
    }

    fn run(&self, job: &PluginJob, args: &[&str]) -> Result<(), EvalError> {
        let output = Command::new(&self.exe)
            .args(&self.prefix_args)
            .args(args)
            .output()
            .map_err(|e| self.fail(job, format!("cannot start: {e}")))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(self.fail(
                job,
                format!("{} exited with {}: {}", args[0], output.status, stderr.trim()),
            ));
        }
        Ok(())
    }

    pub fn fit_predict(&self, job: &PluginJob) -> Result<Vec<Vec<f64>>, EvalError> {
        let mut builder = tempfile::Builder::new();
        builder.prefix("mtc-plugin-");
        let dir = match &self.work_dir {
            Some(parent) => builder.tempdir_in(parent),
            None => builder.tempdir(),
        }
        .map_err(|e| self.fail(job, format!("scratch directory: {e}")))?;
        let path = |name: &str| dir.path().join(name);
        let io = |e: crate::features::FeatureError| self.fail(job, e.to_string());

        write_tensor_file(path("train.ftns"), job.train_x).map_err(io)?;
        write_label_file(path("train.labels"), job.train_meta).map_err(io)?;
        write_tensor_file(path("test.ftns"), job.test_x).map_err(io)?;
        let blind: Vec<TensorLabel> = job
            .test_ids
            .iter()
            .map(|id| TensorLabel {
                session_id: id.clone(),
                label: "?".into(),
                family: "?".into(),
            })
            .collect();
        write_label_file(path("test.ftns.labels"), &blind).map_err(io)?;

        let mut config = self.config.clone();
        config.insert("target".into(), serde_json::to_value(job.target).unwrap());
        config.insert("classes".into(), serde_json::to_value(job.classes).unwrap());
        fs::write(path("config.json"), serde_json::to_vec_pretty(&config).unwrap())
            .map_err(|e| self.fail(job, e.to_string()))?;

        let s = |p: PathBuf| p.to_string_lossy().into_owned();
        let seed = job.seed.to_string();
        self.run(
            job,
            &[
                "train",
                "--arch",
                &self.arch,
                "--train-x",
                &s(path("train.ftns")),
                "--train-y",
                &s(path("train.labels")),
                "--model-out",
                &s(path("model.bin")),
                "--seed",
                &seed,
                "--config",
                &s(path("config.json")),
            ],
        )?;
        self.run(
            job,
            &[
                "predict",
                "--model-in",
                &s(path("model.bin")),
                "--x",
                &s(path("test.ftns")),
                "--out",
                &s(path("pred.csv")),
            ],
        )?;
        let (ids, probs) = read_prediction_file(path("pred.csv"), job.classes.len()).map_err(|e| self.fail(job, e))?;
        if ids != job.test_ids {
            return Err(self.fail(job, "prediction ids do not match the test tensors"));
        }
        Ok(probs)
    }
}

/// Write a prediction file: header, then one row per id.
pub fn write_prediction_file(
    path: impl AsRef<Path>,
    ids: &[String],
    probs: &[Vec<f64>],
    n_classes: usize,
) -> std::io::Result<()> {
    let mut out = String::from("session_id");
    for c in 0..n_classes {
        out.push_str(&format!(",p_class{c}"));
    }
    out.push('\n');
    for (id, row) in ids.iter().zip(probs) {
        out.push_str(id);
        for p in row {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    fs::write(path, out)
}

/// Parse a prediction file with `n_classes` probability columns.
pub fn read_prediction_file(path: impl AsRef<Path>, n_classes: usize) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty prediction file")?;
    let cols: Vec<&str> = header.split(',').collect();
    let expected: Vec<String> = std::iter::once("session_id".to_string())
        .chain((0..n_classes).map(|c| format!("p_class{c}")))
        .collect();
    if cols != expected {
        return Err(format!("bad prediction header {header:?}"));
    }
    let mut ids = Vec::new();
    let mut probs = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let mut fields = line.split(',');
        ids.push(fields.next().unwrap_or_default().to_string());
        let row = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("line {}: {e}", n + 2))?;
        if row.len() != n_classes || row.iter().any(|p| !p.is_finite()) {
            return Err(format!("line {}: expected {n_classes} finite probabilities", n + 2));
        }
        probs.push(row);
    }
    Ok((ids, probs))
}
