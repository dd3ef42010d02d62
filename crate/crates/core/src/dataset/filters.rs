use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Label, LabeledCorpus, LabeledSession};
use crate::capture::Transport;

pub const DEFAULT_MIN_PAYLOAD: u64 = 784;
pub const DEFAULT_MIN_FAMILY_SESSIONS: usize = 100;

/// Drop sessions carrying fewer than `threshold` payload bytes.
pub fn filter_min_payload(corpus: &LabeledCorpus, threshold: u64) -> LabeledCorpus {
    corpus.retain_where(|s| s.session.total_payload_bytes >= threshold)
}

/// A session-level exclusion rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseRule {
    /// Either endpoint's port lies in `low..=high`. `transport: None`
    /// matches both TCP and UDP.
    Port {
        name: String,
        transport: Option<TransportName>,
        low: u16,
        high: u16,
    },
    /// Some packet is addressed to a broadcast or multicast destination.
    BroadcastOrMulticast { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportName {
    Tcp,
    Udp,
}

impl TransportName {
    fn matches(self, t: Transport) -> bool {
        matches!(
            (self, t),
            (TransportName::Tcp, Transport::Tcp) | (TransportName::Udp, Transport::Udp)
        )
    }
}

impl NoiseRule {
    pub fn name(&self) -> &str {
        match self {
            NoiseRule::Port { name, .. } | NoiseRule::BroadcastOrMulticast { name } => name,
        }
    }

    pub fn matches(&self, s: &LabeledSession) -> bool {
        let session = &s.session;
        match self {
            NoiseRule::Port {
                transport, low, high, ..
            } => {
                let key = &session.key;
                transport.is_none_or(|t| t.matches(key.transport))
                    && [key.endpoint_a.port, key.endpoint_b.port]
                        .iter()
                        .any(|p| (*low..=*high).contains(p))
            }
            NoiseRule::BroadcastOrMulticast { .. } => session
                .packets
                .iter()
                .any(|p| session.destination(p).is_broadcast_or_multicast()),
        }
    }

    fn port(name: &str, transport: Option<TransportName>, low: u16, high: u16) -> Self {
        NoiseRule::Port {
            name: name.into(),
            transport,
            low,
            high,
        }
    }
}

/// Ordered list of exclusion rules; a session is attributed to the first
/// rule it matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denylist {
    pub rules: Vec<NoiseRule>,
}

impl Default for Denylist {
    fn default() -> Self {
        use TransportName::Udp;
        Denylist {
            rules: vec![
                NoiseRule::port("dns", None, 53, 53),
                NoiseRule::port("snmp", Some(Udp), 161, 162),
                NoiseRule::port("llmnr", Some(Udp), 5355, 5355),
                NoiseRule::port("netbios", Some(Udp), 137, 138),
                NoiseRule::port("ssdp", Some(Udp), 1900, 1900),
                NoiseRule::port("dhcp", Some(Udp), 67, 68),
                NoiseRule::BroadcastOrMulticast {
                    name: "broadcast_multicast".into(),
                },
            ],
        }
    }
}

/// Sessions removed per rule name.
pub type NoiseTally = BTreeMap<String, usize>;

/// Remove sessions matching any denylist rule.
pub fn filter_noise(corpus: &LabeledCorpus, denylist: &Denylist) -> (LabeledCorpus, NoiseTally) {
    let mut tally: NoiseTally = denylist.rules.iter().map(|r| (r.name().to_string(), 0)).collect();
    let out = corpus.retain_where(|s| match denylist.rules.iter().find(|r| r.matches(s)) {
        Some(rule) => {
            *tally.get_mut(rule.name()).expect("tally seeded") += 1;
            false
        }
        None => true,
    });
    (out, tally)
}

/// Downsample the majority label to the minority count so both labels are
/// equally represented. Selection is uniform and seeded; retained sessions
/// keep their relative order. Malware family proportions are not adjusted.
pub fn balance_benign_malware(corpus: &LabeledCorpus, seed: u64) -> Result<LabeledCorpus, DatasetError> {
    let benign = corpus.count(Label::Benign);
    let malware = corpus.count(Label::Malware);
    if benign == 0 || malware == 0 {
        let present = if benign == 0 { Label::Malware } else { Label::Benign };
        return Err(DatasetError::OneClassOnly(present));
    }
    if benign == malware {
        return Ok(corpus.clone());
    }
    let (majority, keep) = if benign > malware {
        (Label::Benign, malware)
    } else {
        (Label::Malware, benign)
    };
    let positions: Vec<usize> = corpus
        .sessions
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == majority)
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: HashSet<usize> = rand::seq::index::sample(&mut rng, positions.len(), keep)
        .into_iter()
        .map(|k| positions[k])
        .collect();
    let sessions = corpus
        .sessions
        .iter()
        .enumerate()
        .filter(|(i, s)| s.label != majority || chosen.contains(i))
        .map(|(_, s)| s.clone())
        .collect();
    Ok(LabeledCorpus::new(corpus.name.clone(), sessions))
}

/// Drop every malware family with fewer than `min_sessions` sessions.
/// Benign sessions are never dropped.
pub fn min_family_filter(corpus: &LabeledCorpus, min_sessions: usize) -> LabeledCorpus {
    let counts = corpus.family_counts();
    corpus.retain_where(|s| s.label == Label::Benign || counts[&s.family] >= min_sessions)
}
