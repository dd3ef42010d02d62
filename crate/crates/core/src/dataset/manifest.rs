use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetError, Label, BENIGN_FAMILY};

/// One capture file and the ground truth for every session inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: String,
    pub label: Label,
    pub family: String,
    pub source_dataset: String,
}

/// TOML document listing the captures that make up a dataset.
///
/// ```toml
/// dataset_name = "MTAB"
///
/// [[entries]]
/// path = "benign/boa-0001.pcap"
/// label = "benign"
/// family = "benign"
/// source_dataset = "BOA"
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn new(dataset_name: impl Into<String>) -> Self {
        DatasetManifest {
            dataset_name: dataset_name.into(),
            entries: Vec::new(),
            base_dir: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Read and validate a manifest file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut manifest = Self::parse(&text).map_err(|reason| DatasetError::Manifest {
            path: path.to_path_buf(),
            reason,
        })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf);
        manifest.validate()?;
        Ok(manifest)
    }

    /// Paths are unique and the family is `benign` exactly for benign entries.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.path.as_str()) {
                return Err(DatasetError::DuplicatePath(e.path.clone()));
            }
            if (e.family == BENIGN_FAMILY) != (e.label == Label::Benign) {
                return Err(DatasetError::FamilyLabelMismatch {
                    path: e.path.clone(),
                    family: e.family.clone(),
                    label: e.label,
                });
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(path: &str, label: Label, family: &str) -> ManifestEntry {
        ManifestEntry {
            path: path.into(),
            label,
            family: family.into(),
            source_dataset: "X".into(),
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut m = DatasetManifest::new("MTAB");
        m.entries.push(entry("a.pcap", Label::Benign, "benign"));
        m.entries.push(entry("b.pcap", Label::Malware, "Dridex"));
        let back = DatasetManifest::parse(&m.to_toml()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn duplicate_path_rejected() {
        let mut m = DatasetManifest::new("d");
        m.entries.push(entry("a.pcap", Label::Benign, "benign"));
        m.entries.push(entry("a.pcap", Label::Benign, "benign"));
        assert!(matches!(m.validate(), Err(DatasetError::DuplicatePath(_))));
    }

    #[test]
    fn family_must_match_label() {
        let mut m = DatasetManifest::new("d");
        m.entries.push(entry("a.pcap", Label::Malware, "benign"));
        assert!(matches!(m.validate(), Err(DatasetError::FamilyLabelMismatch { .. })));
        let mut m = DatasetManifest::new("d");
        m.entries.push(entry("a.pcap", Label::Benign, "Emotet"));
        assert!(m.validate().is_err());
    }
}
