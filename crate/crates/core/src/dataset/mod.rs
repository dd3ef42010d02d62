//! Labeled session corpora: manifest-driven assembly, preprocessing filters,
//! label balancing, corpus statistics and the on-disk corpus store.

mod corpus;
mod filters;
mod manifest;
mod stats;
mod store;

use std::path::PathBuf;

pub use corpus::{
    build_corpus, merge_corpora, BuildOptions, BuildReport, FileReport, LabeledCorpus, LabeledSession, SessionId,
};
pub use filters::{
    balance_benign_malware, filter_min_payload, filter_noise, min_family_filter, Denylist, NoiseRule, NoiseTally,
    DEFAULT_MIN_FAMILY_SESSIONS, DEFAULT_MIN_PAYLOAD,
};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use stats::{compute_tls_share, is_tls_record_start, CorpusStats, LabelStats};
pub use store::{load_corpus, read_corpus, save_corpus, write_corpus};

use serde::{Deserialize, Serialize};

use crate::capture::CaptureError;

/// Family name reserved for benign traffic.
pub const BENIGN_FAMILY: &str = "benign";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malware,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malware => "malware",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Malware => 1,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benign" => Ok(Label::Benign),
            "malware" => Ok(Label::Malware),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("capture listed more than once: {0}")]
    DuplicatePath(String),
    #[error("entry {path}: family {family:?} does not agree with label {label}")]
    FamilyLabelMismatch { path: String, family: String, label: Label },
    #[error("missing capture file {0}")]
    MissingFile(PathBuf),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error("corpus holds only {0} sessions; balancing needs both labels")]
    OneClassOnly(Label),
    #[error("corrupt corpus store: {0}")]
    CorruptStore(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
