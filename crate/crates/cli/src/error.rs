use std::fmt;

use mtc_core::dataset::DatasetError;
use mtc_core::eval::EvalError;
use mtc_core::features::FeatureError;
use mtc_core::models::ModelError;

/// A failed command, carrying the exit code class.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Plugin(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Plugin(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Plugin(m) => write!(f, "plugin error: {m}"),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<FeatureError> for Failure {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::InsufficientPayload { .. } => Failure::Data(format!(
                "{e} (run `mtc preprocess --min-payload 784` before using raw-byte representations)"
            )),
            FeatureError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParams(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Plugin { .. } => Failure::Plugin(e.to_string()),
            EvalError::UnknownFamily { .. } => Failure::Data(format!("UnknownFamily: {e}")),
            EvalError::Feature(f) => f.into(),
            EvalError::Model {
                source: ModelError::InvalidParams(_),
                ..
            } => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}
