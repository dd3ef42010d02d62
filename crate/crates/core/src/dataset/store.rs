//! `MTC1` corpus store.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MTC1"
//! name_len u32, name utf-8
//! session_count u64
//! per session: record_len u32, then
//!     session_id [u8; 16]
//!     label u8 (0 benign, 1 malware)
//!     family_len u32, family utf-8
//!     source_len u32, source utf-8
//!     transport u8 (IP protocol number)
//!     initiator endpoint, responder endpoint
//!         (addr_kind u8 4|6, 4 or 16 address bytes, port u16)
//!     session_index u32
//!     packet_count u32
//!     per packet: timestamp_us u64, direction u8 (0 fwd, 1 bwd),
//!                 tcp_flags u8, payload_len u32, payload bytes
//! crc32 u32 over every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::Path;

use super::{DatasetError, Label, LabeledCorpus, LabeledSession, SessionId};
use crate::capture::{Direction, Endpoint, FlowKey, Session, SessionPacket, Transport};

const MAGIC: &[u8; 4] = b"MTC1";

pub(crate) fn encode_endpoint(buf: &mut Vec<u8>, ep: &Endpoint) {
    match ep.addr {
        IpAddr::V4(a) => {
            buf.push(4);
            buf.extend_from_slice(&a.octets());
        }
        IpAddr::V6(a) => {
            buf.push(6);
            buf.extend_from_slice(&a.octets());
        }
    }
    buf.extend_from_slice(&ep.port.to_le_bytes());
}

pub(crate) fn encode_flow_key(buf: &mut Vec<u8>, key: &FlowKey) {
    buf.push(key.transport as u8);
    encode_endpoint(buf, &key.endpoint_a);
    encode_endpoint(buf, &key.endpoint_b);
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn encode_session(buf: &mut Vec<u8>, s: &LabeledSession) {
    buf.extend_from_slice(&s.session_id.0);
    buf.push(s.label.index() as u8);
    put_str(buf, &s.family);
    put_str(buf, &s.source_dataset);
    buf.push(s.session.key.transport as u8);
    encode_endpoint(buf, &s.session.initiator);
    encode_endpoint(buf, &s.session.responder());
    buf.extend_from_slice(&s.session.session_index.to_le_bytes());
    buf.extend_from_slice(&(s.session.packets.len() as u32).to_le_bytes());
    for p in &s.session.packets {
        buf.extend_from_slice(&p.timestamp_us.to_le_bytes());
        buf.push(match p.direction {
            Direction::Forward => 0,
            Direction::Backward => 1,
        });
        buf.push(p.tcp_flags);
        buf.extend_from_slice(&(p.payload.len() as u32).to_le_bytes());
        buf.extend_from_slice(&p.payload);
    }
}

/// Serialize a corpus into the store format.
pub fn write_corpus(corpus: &LabeledCorpus) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_str(&mut buf, &corpus.name);
    buf.extend_from_slice(&(corpus.sessions.len() as u64).to_le_bytes());
    let mut record = Vec::new();
    for s in &corpus.sessions {
        record.clear();
        encode_session(&mut record, s);
        buf.extend_from_slice(&(record.len() as u32).to_le_bytes());
        buf.extend_from_slice(&record);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn save_corpus(corpus: &LabeledCorpus, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&write_corpus(corpus)).map_err(io)?;
    f.sync_all().map_err(io)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<LabeledCorpus, DatasetError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> DatasetError {
    DatasetError::CorruptStore(msg.into())
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, DatasetError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DatasetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, DatasetError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }

    fn endpoint(&mut self) -> Result<Endpoint, DatasetError> {
        let addr = match self.u8()? {
            4 => IpAddr::V4(Ipv4Addr::from(<[u8; 4]>::try_from(self.take(4)?).unwrap())),
            6 => IpAddr::V6(Ipv6Addr::from(<[u8; 16]>::try_from(self.take(16)?).unwrap())),
            k => return Err(corrupt(format!("bad address kind {k}"))),
        };
        Ok(Endpoint::new(addr, self.u16()?))
    }
}

fn decode_session(rec: &[u8]) -> Result<LabeledSession, DatasetError> {
    let mut c = Cursor { buf: rec, pos: 0 };
    let session_id = SessionId(c.take(16)?.try_into().unwrap());
    let label = match c.u8()? {
        0 => Label::Benign,
        1 => Label::Malware,
        v => return Err(corrupt(format!("bad label {v}"))),
    };
    let family = c.string()?;
    let source_dataset = c.string()?;
    let transport = Transport::from_ip_proto(c.u8()?).ok_or_else(|| corrupt("bad transport"))?;
    let initiator = c.endpoint()?;
    let responder = c.endpoint()?;
    let session_index = c.u32()?;
    let n = c.u32()? as usize;
    let mut packets = Vec::with_capacity(n.min(rec.len() / 14));
    let mut total = 0u64;
    for _ in 0..n {
        let timestamp_us = c.u64()?;
        let direction = match c.u8()? {
            0 => Direction::Forward,
            1 => Direction::Backward,
            v => return Err(corrupt(format!("bad direction {v}"))),
        };
        let tcp_flags = c.u8()?;
        let len = c.u32()? as usize;
        let payload = c.take(len)?.to_vec();
        total += len as u64;
        packets.push(SessionPacket {
            timestamp_us,
            direction,
            tcp_flags,
            payload,
        });
    }
    if c.pos != rec.len() {
        return Err(corrupt("trailing bytes in session record"));
    }
    if packets.is_empty() {
        return Err(corrupt("session without packets"));
    }
    Ok(LabeledSession {
        session_id,
        session: Session {
            key: FlowKey::new(initiator, responder, transport),
            initiator,
            packets,
            total_payload_bytes: total,
            session_index,
        },
        label,
        family,
        source_dataset,
    })
}

/// Parse a store image, verifying magic and checksum.
pub fn read_corpus(bytes: &[u8]) -> Result<LabeledCorpus, DatasetError> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(corrupt("checksum mismatch"));
    }
    let mut c = Cursor { buf: body, pos: 4 };
    let name = c.string()?;
    let count = c.u64()?;
    let mut sessions = Vec::new();
    for _ in 0..count {
        let len = c.u32()? as usize;
        sessions.push(decode_session(c.take(len)?)?);
    }
    if c.pos != body.len() {
        return Err(corrupt("trailing bytes after last session"));
    }
    Ok(LabeledCorpus::new(name, sessions))
}
