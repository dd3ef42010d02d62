use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Label, LabeledCorpus};
use crate::capture::Session;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub sessions: usize,
    pub tls_sessions: usize,
}

impl LabelStats {
    /// `None` when the label has no sessions.
    pub fn tls_share(&self) -> Option<f64> {
        (self.sessions > 0).then(|| self.tls_sessions as f64 / self.sessions as f64)
    }

    pub fn non_tls_share(&self) -> Option<f64> {
        (self.sessions > 0).then(|| (self.sessions - self.tls_sessions) as f64 / self.sessions as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub benign: LabelStats,
    pub malware: LabelStats,
    pub per_family: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn label(&self, label: Label) -> &LabelStats {
        match label {
            Label::Benign => &self.benign,
            Label::Malware => &self.malware,
        }
    }
}

/// Does `payload` open with a TLS record header (content type 20..=23,
/// protocol version 3.1 through 3.4)?
pub fn is_tls_record_start(payload: &[u8]) -> bool {
    payload.len() >= 3
        && (0x14..=0x17).contains(&payload[0])
        && payload[1] == 0x03
        && (0x01..=0x04).contains(&payload[2])
}

fn is_tls_session(session: &Session) -> bool {
    session.packets.iter().any(|p| is_tls_record_start(&p.payload))
}

/// Per-label session counts and TLS share, plus per-family counts.
pub fn compute_tls_share(corpus: &LabeledCorpus) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for s in &corpus.sessions {
        let entry = match s.label {
            Label::Benign => &mut stats.benign,
            Label::Malware => &mut stats.malware,
        };
        entry.sessions += 1;
        if is_tls_session(&s.session) {
            entry.tls_sessions += 1;
        }
        *stats.per_family.entry(s.family.clone()).or_insert(0) += 1;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_header_sniffing() {
        assert!(is_tls_record_start(&[0x16, 0x03, 0x01, 0x00, 0x05]));
        assert!(is_tls_record_start(&[0x17, 0x03, 0x03]));
        assert!(!is_tls_record_start(&[0x16, 0x03, 0x00]));
        assert!(!is_tls_record_start(&[0x18, 0x03, 0x01]));
        assert!(!is_tls_record_start(b"GET / HTTP/1.1"));
        assert!(!is_tls_record_start(&[0x16, 0x03]));
    }

    #[test]
    fn empty_label_has_no_share() {
        let s = LabelStats::default();
        assert_eq!(s.tls_share(), None);
        let s = LabelStats {
            sessions: 10,
            tls_sessions: 7,
        };
        assert_eq!(s.tls_share(), Some(0.7));
        assert_eq!(s.tls_share().unwrap() + s.non_tls_share().unwrap(), 1.0);
    }
}
