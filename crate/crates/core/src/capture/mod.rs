//! Packet-capture ingestion.
//!
//! Reads classic pcap (microsecond and nanosecond variants, either byte
//! order) and pcapng files, strips link/network/transport headers, and
//! reassembles the resulting packets into bidirectional sessions keyed by a
//! canonical 5-tuple.

mod decode;
mod reader;
mod session;
pub mod writer;

use std::net::IpAddr;
use std::path::PathBuf;

pub use decode::{decode_frame, Decoded, LinkType, SkipReason};
pub use reader::{parse_capture, CaptureReader, CaptureStats, ParsedCapture};
pub use session::{assemble_sessions, Direction, Endpoint, FlowKey, Session, SessionConfig, SessionPacket};

/// Transport protocols carried into sessions. The discriminants are the IP
/// protocol numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Transport {
    Tcp = 6,
    Udp = 17,
}

impl Transport {
    pub fn from_ip_proto(proto: u8) -> Option<Self> {
        match proto {
            6 => Some(Transport::Tcp),
            17 => Some(Transport::Udp),
            _ => None,
        }
    }
}

/// TCP header flag bits, as they appear in byte 13 of the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;

    pub fn has(self, bit: u8) -> bool {
        self.0 & bit != 0
    }

    pub fn fin(self) -> bool {
        self.has(Self::FIN)
    }

    pub fn syn(self) -> bool {
        self.has(Self::SYN)
    }

    pub fn rst(self) -> bool {
        self.has(Self::RST)
    }

    pub fn ack(self) -> bool {
        self.has(Self::ACK)
    }
}

/// One TCP or UDP packet with its transport payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPacket {
    /// Microseconds since the Unix epoch.
    pub timestamp_us: u64,
    pub ip_src: IpAddr,
    pub ip_dst: IpAddr,
    pub port_src: u16,
    pub port_dst: u16,
    pub transport: Transport,
    /// `None` for UDP.
    pub tcp_flags: Option<TcpFlags>,
    /// Transport-layer payload; link, IP and TCP/UDP headers excluded.
    pub payload: Vec<u8>,
    pub caplen: u32,
    pub wirelen: u32,
}

impl ParsedPacket {
    pub fn src(&self) -> Endpoint {
        Endpoint::new(self.ip_src, self.port_src)
    }

    pub fn dst(&self) -> Endpoint {
        Endpoint::new(self.ip_dst, self.port_dst)
    }

    pub fn flow_key(&self) -> FlowKey {
        FlowKey::new(self.src(), self.dst(), self.transport)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("unreadable capture {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
