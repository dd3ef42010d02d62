//! Session-to-tensor extractors and the `FTNS` tensor interchange format.

mod extract;
mod stats;
mod tensor_file;

pub use extract::{
    extract, extract_deepmal, extract_img28, extract_pktseq, extract_raw784, featurize, ExtractorConfig, RAW_LEN,
};
pub use stats::{extract_stats, STATS_LEN, STATS_NAMES};
pub use tensor_file::{read_label_file, read_tensor_file, write_label_file, write_tensor_file, TensorLabel};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which representation a tensor holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReprTag {
    /// First 784 payload bytes as a vector.
    Raw784,
    /// The same bytes as a 28x28 row-major image.
    Img28,
    /// First `n` payload bytes of each of the first `m` packets.
    DeepMal { m: usize, n: usize },
    /// Per-packet (length, direction, inter-arrival) for `p` packets.
    PktSeq { p: usize },
    /// Fixed 24-slot flow statistics.
    Stats,
}

impl ReprTag {
    pub fn dims(self) -> Vec<usize> {
        match self {
            ReprTag::Raw784 => vec![RAW_LEN],
            ReprTag::Img28 => vec![28, 28],
            ReprTag::DeepMal { m, n } => vec![m, n],
            ReprTag::PktSeq { p } => vec![p, 3],
            ReprTag::Stats => vec![STATS_LEN],
        }
    }
}

/// Representation selector without its parameters (those live in
/// [`ExtractorConfig`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Raw784,
    Img28,
    DeepMal,
    PktSeq,
    Stats,
}

impl Representation {
    pub const ALL: [Representation; 5] = [
        Representation::Raw784,
        Representation::Img28,
        Representation::DeepMal,
        Representation::PktSeq,
        Representation::Stats,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Raw784 => "raw784",
            Representation::Img28 => "img28",
            Representation::DeepMal => "deepmal",
            Representation::PktSeq => "pktseq",
            Representation::Stats => "stats",
        }
    }

    pub fn tag(self, config: &ExtractorConfig) -> ReprTag {
        match self {
            Representation::Raw784 => ReprTag::Raw784,
            Representation::Img28 => ReprTag::Img28,
            Representation::DeepMal => ReprTag::DeepMal {
                m: config.m,
                n: config.n,
            },
            Representation::PktSeq => ReprTag::PktSeq { p: config.p },
            Representation::Stats => ReprTag::Stats,
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Representation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown representation {s:?}"))
    }
}

/// One sample: a rank 1..=3 array of finite values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
    pub repr: ReprTag,
}

impl FeatureTensor {
    pub fn get2(&self, i: usize, j: usize) -> f32 {
        debug_assert_eq!(self.dims.len(), 2);
        self.values[i * self.dims[1] + j]
    }
}

/// A batch of same-shaped samples stored contiguously; row `i` is sample
/// `i` flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// Shape of a single sample.
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(dims: Vec<usize>) -> Self {
        FeatureMatrix { dims, data: Vec::new() }
    }

    /// A rank-1 matrix from row vectors; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, FeatureError> {
        let width = rows.first().map_or(0, Vec::len);
        let mut m = FeatureMatrix::new(vec![width]);
        for r in rows {
            if r.len() != width {
                return Err(FeatureError::ShapeMismatch {
                    expected: vec![width],
                    found: vec![r.len()],
                });
            }
            m.data.extend_from_slice(r);
        }
        Ok(m)
    }

    pub fn from_tensors(dims: Vec<usize>, tensors: &[FeatureTensor]) -> Result<Self, FeatureError> {
        let mut m = FeatureMatrix::new(dims);
        for t in tensors {
            m.push(t)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, t: &FeatureTensor) -> Result<(), FeatureError> {
        if t.dims != self.dims {
            return Err(FeatureError::ShapeMismatch {
                expected: self.dims.clone(),
                found: t.dims.clone(),
            });
        }
        self.data.extend_from_slice(&t.values);
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn rows(&self) -> usize {
        match self.n_features() {
            0 => 0,
            w => self.data.len() / w,
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.n_features();
        &self.data[i * w..(i + 1) * w]
    }

    /// New matrix holding the given rows in the given order.
    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.dims.clone());
        out.data.reserve(idx.len() * self.n_features());
        for &i in idx {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("session has {available} payload bytes; {required} required")]
    InsufficientPayload { available: u64, required: usize },
    #[error("invalid extractor configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("corrupt tensor file {path}: {reason}")]
    CorruptTensorFile { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
