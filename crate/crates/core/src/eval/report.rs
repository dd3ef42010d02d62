//! Experiment report files.
//!
//! A report is JSON `{"body": ..., "generated_at_unix": ...}`. The body
//! holds everything that depends on the inputs (configuration, its
//! fingerprint, seed, results) and is byte-identical across reruns; the
//! wall-clock timestamp lives outside it.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{EvalError, SamplePrediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub tool: String,
    pub experiment: String,
    pub seed: u64,
    pub fingerprint: String,
    pub config: Value,
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub body: ReportBody,
    pub generated_at_unix: u64,
}

/// SHA-256 of the compact JSON encoding of `config`. Object keys are
/// serialized in sorted order, so the digest ignores construction order.
pub fn fingerprint(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values always serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ReportBody {
    pub fn new(experiment: impl Into<String>, config: Value, seed: u64, result: &impl Serialize) -> Self {
        ReportBody {
            tool: format!("mtc {}", env!("CARGO_PKG_VERSION")),
            experiment: experiment.into(),
            seed,
            fingerprint: fingerprint(&config),
            config,
            result: serde_json::to_value(result).expect("results always serialize"),
        }
    }

    /// Canonical body bytes; equal across reruns of the same experiment.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("bodies always serialize")
    }
}

impl ReportFile {
    pub fn stamped(body: ReportBody) -> Self {
        let generated_at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        ReportFile {
            body,
            generated_at_unix,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_report(path: impl AsRef<Path>, report: &ReportFile) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut bytes = serde_json::to_vec_pretty(report).expect("reports always serialize");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportFile, EvalError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| EvalError::InvalidArgument(format!("{}: {e}", path.display())))
}

/// Flat CSV: `session_id,fold,truth,predicted,p_class0,...`.
pub fn write_predictions_csv(
    path: impl AsRef<Path>,
    rows: &[SamplePrediction],
    n_classes: usize,
) -> Result<(), EvalError> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| EvalError::InvalidArgument(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![
        "session_id".to_string(),
        "fold".into(),
        "truth".into(),
        "predicted".into(),
    ];
    header.extend((0..n_classes).map(|c| format!("p_class{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.session_id.clone(),
            r.fold.map(|f| f.to_string()).unwrap_or_default(),
            r.truth.clone(),
            r.predicted.clone(),
        ];
        rec.extend(r.probs.iter().map(|p| p.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}
