use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::store::encode_flow_key;
use super::{DatasetError, DatasetManifest, Label};
use crate::capture::{self, assemble_sessions, CaptureStats, FlowKey, Session, SessionConfig};

/// Stable 128-bit session identifier: a truncated SHA-256 over the manifest
/// path of the capture, the flow key and the session index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(pub [u8; 16]);

impl SessionId {
    pub fn derive(path: &str, key: &FlowKey, session_index: u32) -> Self {
        let mut h = Sha256::new();
        h.update(b"mtc-session-v1");
        h.update((path.len() as u64).to_le_bytes());
        h.update(path.as_bytes());
        let mut key_bytes = Vec::with_capacity(48);
        encode_flow_key(&mut key_bytes, key);
        h.update(&key_bytes);
        h.update(session_index.to_le_bytes());
        let digest = h.finalize();
        let mut id = [0u8; 16];
        id.copy_from_slice(&digest[..16]);
        SessionId(id)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 32 || !s.is_ascii() {
            return None;
        }
        let mut id = [0u8; 16];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let pair = std::str::from_utf8(chunk).ok()?;
            id[i] = u8::from_str_radix(pair, 16).ok()?;
        }
        Some(SessionId(id))
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSession {
    pub session_id: SessionId,
    pub session: Session,
    pub label: Label,
    pub family: String,
    pub source_dataset: String,
}

/// An ordered population of labeled sessions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledCorpus {
    pub name: String,
    pub sessions: Vec<LabeledSession>,
}

impl LabeledCorpus {
    pub fn new(name: impl Into<String>, sessions: Vec<LabeledSession>) -> Self {
        LabeledCorpus {
            name: name.into(),
            sessions,
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.sessions.iter().filter(|s| s.label == label).count()
    }

    /// Session counts per family, benign included.
    pub fn family_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.sessions {
            *counts.entry(s.family.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Malware family names, sorted.
    pub fn malware_families(&self) -> Vec<String> {
        let mut fams: Vec<String> = self
            .sessions
            .iter()
            .filter(|s| s.label == Label::Malware)
            .map(|s| s.family.clone())
            .collect();
        fams.sort();
        fams.dedup();
        fams
    }

    /// Keep sessions matching `keep`, preserving order.
    pub fn retain_where(&self, mut keep: impl FnMut(&LabeledSession) -> bool) -> LabeledCorpus {
        LabeledCorpus {
            name: self.name.clone(),
            sessions: self.sessions.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    pub sessions: SessionConfig,
}

#[derive(Debug, Clone)]
pub struct FileReport {
    pub path: PathBuf,
    pub stats: CaptureStats,
    pub sessions: usize,
}

/// Per-file parsing outcome of [`build_corpus`].
#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub files: Vec<FileReport>,
    /// Non-fatal problems such as captures that yielded no session.
    pub warnings: Vec<String>,
}

/// Parse every capture listed in the manifest, reassemble sessions and label
/// them with their file's entry. Files are parsed in parallel; the output
/// keeps manifest order, then session order within each file.
pub fn build_corpus(
    manifest: &DatasetManifest,
    options: BuildOptions,
) -> Result<(LabeledCorpus, BuildReport), DatasetError> {
    manifest.validate()?;
    for entry in &manifest.entries {
        let path = manifest.resolve(entry);
        if !path.is_file() {
            return Err(DatasetError::MissingFile(path));
        }
    }
    let per_file: Vec<Result<(Vec<LabeledSession>, FileReport), DatasetError>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let path = manifest.resolve(entry);
            let parsed = capture::parse_capture(&path)?;
            let sessions = assemble_sessions(parsed.packets, options.sessions);
            let report = FileReport {
                path: path.clone(),
                stats: parsed.stats,
                sessions: sessions.len(),
            };
            let labeled = sessions
                .into_iter()
                .map(|session| LabeledSession {
                    session_id: SessionId::derive(&entry.path, &session.key, session.session_index),
                    session,
                    label: entry.label,
                    family: entry.family.clone(),
                    source_dataset: entry.source_dataset.clone(),
                })
                .collect();
            Ok((labeled, report))
        })
        .collect();

    let mut sessions = Vec::new();
    let mut report = BuildReport::default();
    for result in per_file {
        let (labeled, file) = result?;
        if file.sessions == 0 {
            let msg = format!("{}: capture holds no TCP/UDP session", file.path.display());
            log::warn!("{msg}");
            report.warnings.push(msg);
        }
        if file.stats.truncated_records > 0 {
            let msg = format!("{}: truncated final record", file.path.display());
            log::warn!("{msg}");
            report.warnings.push(msg);
        }
        sessions.extend(labeled);
        report.files.push(file);
    }
    Ok((LabeledCorpus::new(manifest.dataset_name.clone(), sessions), report))
}

/// Concatenate corpora. With `suffix_families`, every malware family is
/// renamed `family@source_dataset` so that same-named families from
/// different sources stay distinct classes.
pub fn merge_corpora(name: impl Into<String>, corpora: &[LabeledCorpus], suffix_families: bool) -> LabeledCorpus {
    let sessions = corpora
        .iter()
        .flat_map(|c| c.sessions.iter().cloned())
        .map(|mut s| {
            if suffix_families && s.label == Label::Malware {
                s.family = format!("{}@{}", s.family, s.source_dataset);
            }
            s
        })
        .collect();
    LabeledCorpus::new(name, sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{Endpoint, Transport};

    fn key() -> FlowKey {
        FlowKey::new(
            Endpoint::new("10.0.0.1".parse().unwrap(), 1),
            Endpoint::new("10.0.0.2".parse().unwrap(), 2),
            Transport::Tcp,
        )
    }

    #[test]
    fn session_id_depends_on_path_and_index() {
        let a = SessionId::derive("cridex.pcap", &key(), 0);
        let b = SessionId::derive("dridex.pcap", &key(), 0);
        let c = SessionId::derive("cridex.pcap", &key(), 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, SessionId::derive("cridex.pcap", &key(), 0));
    }

    #[test]
    fn hex_round_trip() {
        let a = SessionId::derive("x", &key(), 3);
        assert_eq!(SessionId::from_hex(&a.to_hex()), Some(a));
        assert_eq!(SessionId::from_hex("zz"), None);
    }
}
