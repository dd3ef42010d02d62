//! Planted-signal capture corpora: synthetic sessions whose class is
//! written into fixed byte ranges of the session payload, so classifier
//! results can be checked against a known ground truth.
//!
//! Default layout of the payload stream (all other bytes are uniform noise):
//!
//! | bytes    | benign    | Alpha     | Bravo     | Charlie   |
//! |----------|-----------|-----------|-----------|-----------|
//! | 16..112  | 0x00-0x5F | 0x00-0x5F | 0xA0-0xFF | 0xA0-0xFF |
//! | 112..208 | 0x00-0x5F | 0xA0-0xFF | 0x00-0x2F | 0x30-0x5F |
//!
//! Bravo and Charlie share the malware marker in 16..112; Alpha differs
//! from benign only in 112..208, a pattern no other class shows. Bytes
//! 0..16 carry a TLS application-data header in a seeded share of the
//! sessions of every class.

use std::fs;
use std::io::Cursor;
use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capture::writer::{build_frame, PcapWriter};
use crate::capture::{assemble_sessions, CaptureReader, Endpoint, SessionConfig, TcpFlags, Transport};
use crate::dataset::{DatasetManifest, Label, LabeledCorpus, LabeledSession, ManifestEntry, SessionId, BENIGN_FAMILY};

/// Bytes `start..start + len` of the payload stream drawn uniformly from
/// `low..=high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plant {
    pub start: usize,
    pub len: usize,
    pub low: u8,
    pub high: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedClass {
    pub family: String,
    pub label: Label,
    pub plants: Vec<Plant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: Vec<PlantedClass>,
    /// Full-length TCP sessions per class.
    pub sessions_per_class: usize,
    /// Extra TCP sessions per class with fewer than 784 payload bytes.
    pub short_sessions: usize,
    /// Extra DNS-over-UDP sessions per class.
    pub dns_sessions: usize,
    /// Share of sessions whose payload opens with a TLS record header.
    pub tls_share: f64,
    pub seed: u64,
    pub dataset_name: String,
}

const R1: usize = 16;
const R2: usize = 112;
const REGION: usize = 96;

fn plant(start: usize, low: u8, high: u8) -> Plant {
    Plant {
        start,
        len: REGION,
        low,
        high,
    }
}

impl SynthConfig {
    /// The four-class layout described in the module docs.
    pub fn planted_default() -> Self {
        let class = |family: &str, label, r1: (u8, u8), r2: (u8, u8)| PlantedClass {
            family: family.to_string(),
            label,
            plants: vec![plant(R1, r1.0, r1.1), plant(R2, r2.0, r2.1)],
        };
        SynthConfig {
            classes: vec![
                class(BENIGN_FAMILY, Label::Benign, (0x00, 0x5F), (0x00, 0x5F)),
                class("Alpha", Label::Malware, (0x00, 0x5F), (0xA0, 0xFF)),
                class("Bravo", Label::Malware, (0xA0, 0xFF), (0x00, 0x2F)),
                class("Charlie", Label::Malware, (0xA0, 0xFF), (0x30, 0x5F)),
            ],
            sessions_per_class: 400,
            short_sessions: 8,
            dns_sessions: 8,
            tls_share: 0.5,
            seed: 7,
            dataset_name: "synth".into(),
        }
    }
}

/// Payload stream of one planted session, `len` bytes long.
pub fn planted_payload(class: &PlantedClass, len: usize, tls: bool, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
    if tls && len >= 5 {
        bytes[..5].copy_from_slice(&[0x17, 0x03, 0x03, 0x04, 0x00]);
    }
    for p in &class.plants {
        for b in bytes.iter_mut().skip(p.start).take(p.len) {
            *b = rng.random_range(p.low..=p.high);
        }
    }
    bytes
}

struct FrameSink {
    writer: PcapWriter<Vec<u8>>,
    clock_us: u64,
}

impl FrameSink {
    fn emit(&mut self, src: Endpoint, dst: Endpoint, transport: Transport, flags: u8, payload: &[u8]) {
        self.clock_us += 1_000;
        let frame = build_frame(src, dst, transport, flags, payload);
        self.writer
            .write_frame(self.clock_us, &frame)
            .expect("writing to memory cannot fail");
    }

    fn tcp_session(&mut self, client: Endpoint, server: Endpoint, stream: &[u8], rng: &mut ChaCha8Rng) {
        let ack = TcpFlags::ACK;
        self.emit(client, server, Transport::Tcp, TcpFlags::SYN, &[]);
        self.emit(server, client, Transport::Tcp, TcpFlags::SYN | ack, &[]);
        self.emit(client, server, Transport::Tcp, ack, &[]);
        let mut rest = stream;
        let mut from_client = true;
        while !rest.is_empty() {
            let n = rng.random_range(64..=600).min(rest.len());
            let (chunk, tail) = rest.split_at(n);
            let (s, d) = if from_client {
                (client, server)
            } else {
                (server, client)
            };
            self.emit(s, d, Transport::Tcp, ack | TcpFlags::PSH, chunk);
            rest = tail;
            from_client = !from_client;
        }
        self.emit(client, server, Transport::Tcp, TcpFlags::FIN | ack, &[]);
        self.emit(server, client, Transport::Tcp, TcpFlags::FIN | ack, &[]);
        self.emit(client, server, Transport::Tcp, ack, &[]);
    }

    fn udp_session(&mut self, client: Endpoint, server: Endpoint, stream: &[u8]) {
        for (i, chunk) in stream.chunks(500).enumerate() {
            let (s, d) = if i % 2 == 0 { (client, server) } else { (server, client) };
            self.emit(s, d, Transport::Udp, 0, chunk);
        }
    }
}

/// One pcap image per class, in class order.
pub fn generate_pcaps(config: &SynthConfig) -> Vec<(PlantedClass, Vec<u8>)> {
    config
        .classes
        .iter()
        .enumerate()
        .map(|(ci, class)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(ci as u64);
            let mut sink = FrameSink {
                writer: PcapWriter::new(Vec::new()).expect("memory"),
                clock_us: 1_600_000_000_000_000 + ci as u64 * 1_000_000_000,
            };
            let server = Endpoint::new(IpAddr::V4(Ipv4Addr::new(192, 168, ci as u8, 10)), 443);
            let dns = Endpoint::new(IpAddr::V4(Ipv4Addr::new(192, 168, ci as u8, 53)), 53);
            let total = config.sessions_per_class + config.short_sessions + config.dns_sessions;
            for i in 0..total {
                let client = Endpoint::new(
                    IpAddr::V4(Ipv4Addr::new(10, ci as u8, (i / 250) as u8, (i % 250 + 1) as u8)),
                    40_000 + (i % 20_000) as u16,
                );
                let tls = rng.random_bool(config.tls_share);
                if i < config.sessions_per_class {
                    let len = rng.random_range(900..=1500);
                    let stream = planted_payload(class, len, tls, &mut rng);
                    sink.tcp_session(client, server, &stream, &mut rng);
                } else if i < config.sessions_per_class + config.short_sessions {
                    let len = rng.random_range(100..700);
                    let stream = planted_payload(class, len, tls, &mut rng);
                    sink.tcp_session(client, server, &stream, &mut rng);
                } else {
                    let len = rng.random_range(900..=1200);
                    let stream = planted_payload(class, len, false, &mut rng);
                    sink.udp_session(client, dns, &stream);
                }
            }
            (class.clone(), sink.writer.into_inner())
        })
        .collect()
}

fn file_name(class: &PlantedClass) -> String {
    format!("{}.pcap", class.family.to_lowercase())
}

/// Manifest listing one capture per class.
pub fn synth_manifest(config: &SynthConfig) -> DatasetManifest {
    let mut m = DatasetManifest::new(config.dataset_name.clone());
    m.entries = config
        .classes
        .iter()
        .map(|c| ManifestEntry {
            path: file_name(c),
            label: c.label,
            family: c.family.clone(),
            source_dataset: config.dataset_name.clone(),
        })
        .collect();
    m
}

/// Write the captures and `manifest.toml` into `dir`; returns the manifest path.
pub fn write_synth_corpus(config: &SynthConfig, dir: impl AsRef<Path>) -> std::io::Result<std::path::PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (class, bytes) in generate_pcaps(config) {
        fs::write(dir.join(file_name(&class)), bytes)?;
    }
    let path = dir.join("manifest.toml");
    fs::write(&path, synth_manifest(config).to_toml())?;
    Ok(path)
}

/// The labeled corpus the captures reassemble to, built without touching
/// the filesystem.
pub fn synth_corpus(config: &SynthConfig) -> LabeledCorpus {
    let mut sessions = Vec::new();
    for (class, bytes) in generate_pcaps(config) {
        let name = file_name(&class);
        let reader = CaptureReader::new(Cursor::new(bytes)).expect("valid pcap header");
        let packets: Vec<_> = reader.collect();
        for session in assemble_sessions(packets, SessionConfig::default()) {
            sessions.push(LabeledSession {
                session_id: SessionId::derive(&name, &session.key, session.session_index),
                session,
                label: class.label,
                family: class.family.clone(),
                source_dataset: config.dataset_name.clone(),
            });
        }
    }
    LabeledCorpus::new(config.dataset_name.clone(), sessions)
}

/// A corpus of `n` random sessions built directly in memory: random
/// labels and families, TCP or UDP, server ports that often hit the default
/// denylist, occasional broadcast destinations and payload totals spread
/// around 784 bytes.
pub fn random_corpus(n: usize, seed: u64) -> LabeledCorpus {
    const PORTS: [u16; 10] = [53, 161, 5355, 137, 1900, 67, 443, 80, 8080, 4444];
    const FAMILIES: [&str; 4] = ["Zeus", "Neris", "Virut", "Htbot"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sessions = (0..n)
        .map(|i| {
            let transport = if rng.random_bool(0.6) {
                Transport::Tcp
            } else {
                Transport::Udp
            };
            let client = Endpoint::new(
                IpAddr::V4(Ipv4Addr::new(10, rng.random(), rng.random(), rng.random_range(1..255))),
                rng.random_range(1024..=65535),
            );
            let last = if rng.random_bool(0.05) {
                255
            } else {
                rng.random_range(1..255)
            };
            let server = Endpoint::new(
                IpAddr::V4(Ipv4Addr::new(172, 16, rng.random(), last)),
                PORTS[rng.random_range(0..PORTS.len())],
            );
            let mut packets = Vec::new();
            let mut total = 0u64;
            let mut ts = 1_000_000 * i as u64;
            for k in 0..rng.random_range(1..8) {
                let len = rng.random_range(0..400);
                ts += rng.random_range(1..5_000);
                total += len as u64;
                packets.push(crate::capture::SessionPacket {
                    timestamp_us: ts,
                    direction: if k % 2 == 0 {
                        crate::capture::Direction::Forward
                    } else {
                        crate::capture::Direction::Backward
                    },
                    tcp_flags: if transport == Transport::Tcp { TcpFlags::ACK } else { 0 },
                    payload: (0..len).map(|_| rng.random()).collect(),
                });
            }
            let session = crate::capture::Session {
                key: crate::capture::FlowKey::new(client, server, transport),
                initiator: client,
                packets,
                total_payload_bytes: total,
                session_index: 0,
            };
            let (label, family) = if rng.random_bool(0.5) {
                (Label::Benign, BENIGN_FAMILY.to_string())
            } else {
                (
                    Label::Malware,
                    FAMILIES[rng.random_range(0..FAMILIES.len())].to_string(),
                )
            };
            LabeledSession {
                session_id: SessionId::derive(&format!("random-{i}.pcap"), &session.key, 0),
                session,
                label,
                family,
                source_dataset: "random".into(),
            }
        })
        .collect();
    LabeledCorpus::new("random", sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            sessions_per_class: 12,
            short_sessions: 2,
            dns_sessions: 3,
            ..SynthConfig::planted_default()
        }
    }

    #[test]
    fn session_counts() {
        let corpus = synth_corpus(&small());
        assert_eq!(corpus.len(), 4 * 17);
        assert_eq!(corpus.count(Label::Benign), 17);
    }

    #[test]
    fn plants_land_in_the_payload_stream() {
        let corpus = synth_corpus(&small());
        for s in corpus.sessions.iter().filter(|s| s.session.total_payload_bytes >= 900) {
            let stream: Vec<u8> = s.session.payload_stream().take(208).collect();
            let (r1, r2) = (&stream[16..112], &stream[112..208]);
            match s.family.as_str() {
                "benign" => assert!(r1.iter().chain(r2).all(|&b| b <= 0x5F)),
                "Alpha" => assert!(r1.iter().all(|&b| b <= 0x5F) && r2.iter().all(|&b| b >= 0xA0)),
                "Bravo" => assert!(r1.iter().all(|&b| b >= 0xA0) && r2.iter().all(|&b| b <= 0x2F)),
                "Charlie" => assert!(r1.iter().all(|&b| b >= 0xA0) && r2.iter().all(|&b| (0x30..=0x5F).contains(&b))),
                f => panic!("unexpected family {f}"),
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_pcaps(&small()), generate_pcaps(&small()));
    }
}
