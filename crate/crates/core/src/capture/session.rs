use std::collections::HashMap;
use std::fmt;
use std::net::IpAddr;

use super::{ParsedPacket, TcpFlags, Transport};

/// An (address, port) pair. Ordering is lexicographic on address then port,
/// with every IPv4 address ordered before every IPv6 address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub addr: IpAddr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(addr: IpAddr, port: u16) -> Self {
        Endpoint { addr, port }
    }

    /// Broadcast or multicast destination.
    pub fn is_broadcast_or_multicast(&self) -> bool {
        match self.addr {
            IpAddr::V4(a) => a.is_broadcast() || a.is_multicast() || a.octets()[3] == 255,
            IpAddr::V6(a) => a.is_multicast(),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.addr {
            IpAddr::V4(a) => write!(f, "{a}:{}", self.port),
            IpAddr::V6(a) => write!(f, "[{a}]:{}", self.port),
        }
    }
}

/// Direction-free 5-tuple. The smaller endpoint is always stored first, so
/// both directions of a conversation map to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub endpoint_a: Endpoint,
    pub endpoint_b: Endpoint,
    pub transport: Transport,
}

impl FlowKey {
    pub fn new(x: Endpoint, y: Endpoint, transport: Transport) -> Self {
        let (endpoint_a, endpoint_b) = if x <= y { (x, y) } else { (y, x) };
        FlowKey {
            endpoint_a,
            endpoint_b,
            transport,
        }
    }

    pub fn involves_port(&self, port: u16) -> bool {
        self.endpoint_a.port == port || self.endpoint_b.port == port
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let proto = match self.transport {
            Transport::Tcp => "tcp",
            Transport::Udp => "udp",
        };
        write!(f, "{proto} {} <-> {}", self.endpoint_a, self.endpoint_b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Sent by the session initiator.
    Forward,
    /// Sent by the responder.
    Backward,
}

/// A packet as stored inside a session. Addresses and ports are implied by
/// the session key and the direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionPacket {
    pub timestamp_us: u64,
    pub direction: Direction,
    /// Raw TCP flag byte; always 0 for UDP.
    pub tcp_flags: u8,
    pub payload: Vec<u8>,
}

impl SessionPacket {
    pub fn flags(&self) -> TcpFlags {
        TcpFlags(self.tcp_flags)
    }
}

/// A bidirectional flow between two endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub key: FlowKey,
    /// Sender of the first packet.
    pub initiator: Endpoint,
    pub packets: Vec<SessionPacket>,
    pub total_payload_bytes: u64,
    /// Ordinal among sessions sharing `key` within one capture.
    pub session_index: u32,
}

impl Session {
    pub fn responder(&self) -> Endpoint {
        if self.initiator == self.key.endpoint_a {
            self.key.endpoint_b
        } else {
            self.key.endpoint_a
        }
    }

    /// Destination endpoint of a packet in this session.
    pub fn destination(&self, packet: &SessionPacket) -> Endpoint {
        match packet.direction {
            Direction::Forward => self.responder(),
            Direction::Backward => self.initiator,
        }
    }

    pub fn first_timestamp_us(&self) -> u64 {
        self.packets.first().map_or(0, |p| p.timestamp_us)
    }

    pub fn last_timestamp_us(&self) -> u64 {
        self.packets.last().map_or(0, |p| p.timestamp_us)
    }

    /// Payload bytes of both directions concatenated in packet order.
    pub fn payload_stream(&self) -> impl Iterator<Item = u8> + '_ {
        self.packets.iter().flat_map(|p| p.payload.iter().copied())
    }
}

/// Session boundary timeouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionConfig {
    pub tcp_idle_timeout_us: u64,
    pub udp_idle_timeout_us: u64,
}

impl SessionConfig {
    pub fn from_secs(tcp: f64, udp: f64) -> Self {
        SessionConfig {
            tcp_idle_timeout_us: (tcp * 1e6).round() as u64,
            udp_idle_timeout_us: (udp * 1e6).round() as u64,
        }
    }
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig::from_secs(300.0, 300.0)
    }
}

struct Active {
    slot: usize,
    last_us: u64,
    fin_from_initiator: bool,
    fin_from_responder: bool,
    reset: bool,
}

impl Active {
    fn completed(&self) -> bool {
        self.reset || (self.fin_from_initiator && self.fin_from_responder)
    }
}

/// Group packets into sessions.
///
/// A packet whose key has an active session joins it unless the idle gap
/// exceeds the transport's timeout, or the TCP session already saw FIN from
/// both sides (or a RST) and this packet is a fresh SYN. Trailing ACKs after
/// a teardown stay with the closed session. Sessions are returned in order
/// of their first packet.
pub fn assemble_sessions(packets: impl IntoIterator<Item = ParsedPacket>, config: SessionConfig) -> Vec<Session> {
    let mut packets: Vec<ParsedPacket> = packets.into_iter().collect();
    // Stable, so equal timestamps keep file order.
    packets.sort_by_key(|p| p.timestamp_us);

    let mut sessions: Vec<Session> = Vec::new();
    let mut active: HashMap<FlowKey, Active> = HashMap::new();
    let mut next_index: HashMap<FlowKey, u32> = HashMap::new();

    for p in packets {
        let key = p.flow_key();
        let flags = p.tcp_flags.unwrap_or_default();
        let timeout = match key.transport {
            Transport::Tcp => config.tcp_idle_timeout_us,
            Transport::Udp => config.udp_idle_timeout_us,
        };
        let starts_new = match active.get(&key) {
            None => true,
            Some(a) => {
                let idle = p.timestamp_us.saturating_sub(a.last_us) > timeout;
                let fresh_syn = key.transport == Transport::Tcp && a.completed() && flags.syn() && !flags.ack();
                idle || fresh_syn
            }
        };
        if starts_new {
            let idx = next_index.entry(key).or_insert(0);
            sessions.push(Session {
                key,
                initiator: p.src(),
                packets: Vec::new(),
                total_payload_bytes: 0,
                session_index: *idx,
            });
            *idx += 1;
            active.insert(
                key,
                Active {
                    slot: sessions.len() - 1,
                    last_us: p.timestamp_us,
                    fin_from_initiator: false,
                    fin_from_responder: false,
                    reset: false,
                },
            );
        }
        let a = active.get_mut(&key).expect("active session present");
        let session = &mut sessions[a.slot];
        let direction = if p.src() == session.initiator {
            Direction::Forward
        } else {
            Direction::Backward
        };
        if flags.fin() {
            match direction {
                Direction::Forward => a.fin_from_initiator = true,
                Direction::Backward => a.fin_from_responder = true,
            }
        }
        if flags.rst() {
            a.reset = true;
        }
        a.last_us = p.timestamp_us;
        session.total_payload_bytes += p.payload.len() as u64;
        session.packets.push(SessionPacket {
            timestamp_us: p.timestamp_us,
            direction,
            tcp_flags: flags.0,
            payload: p.payload,
        });
    }
    sessions
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::Ipv4Addr;

    fn pkt(ts: u64, src: (u8, u16), dst: (u8, u16), t: Transport, flags: u8, payload: &[u8]) -> ParsedPacket {
        ParsedPacket {
            timestamp_us: ts,
            ip_src: IpAddr::V4(Ipv4Addr::new(10, 0, 0, src.0)),
            ip_dst: IpAddr::V4(Ipv4Addr::new(10, 0, 0, dst.0)),
            port_src: src.1,
            port_dst: dst.1,
            transport: t,
            tcp_flags: (t == Transport::Tcp).then_some(TcpFlags(flags)),
            payload: payload.to_vec(),
            caplen: 0,
            wirelen: 0,
        }
    }

    const A: (u8, u16) = (1, 1000);
    const B: (u8, u16) = (2, 80);

    #[test]
    fn key_is_symmetric() {
        let p = pkt(0, A, B, Transport::Tcp, 0, b"");
        let q = pkt(0, B, A, Transport::Tcp, 0, b"");
        assert_eq!(p.flow_key(), q.flow_key());
        let u = pkt(0, A, B, Transport::Udp, 0, b"");
        assert_ne!(p.flow_key(), u.flow_key());
    }

    #[test]
    fn request_and_reply_form_one_session() {
        let s = assemble_sessions(
            vec![
                pkt(0, A, B, Transport::Tcp, TcpFlags::ACK, b"x"),
                pkt(1000, B, A, Transport::Tcp, TcpFlags::ACK, b"yz"),
            ],
            SessionConfig::default(),
        );
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].packets.len(), 2);
        assert_eq!(
            s[0].initiator,
            Endpoint::new(IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1)), 1000)
        );
        assert_eq!(s[0].packets[1].direction, Direction::Backward);
        assert_eq!(s[0].total_payload_bytes, 3);
    }

    #[test]
    fn udp_splits_on_idle_timeout() {
        let s = assemble_sessions(
            vec![
                pkt(0, A, B, Transport::Udp, 0, b"a"),
                pkt(600_000_000, A, B, Transport::Udp, 0, b"b"),
            ],
            SessionConfig::from_secs(300.0, 300.0),
        );
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].session_index, s[1].session_index), (0, 1));
    }

    #[test]
    fn syn_after_teardown_starts_new_session() {
        use TcpFlags as F;
        let t = Transport::Tcp;
        let s = assemble_sessions(
            vec![
                pkt(0, A, B, t, F::SYN, b""),
                pkt(1, B, A, t, F::SYN | F::ACK, b""),
                pkt(2, A, B, t, F::ACK, b""),
                pkt(3, A, B, t, F::PSH | F::ACK, b"data"),
                pkt(4, A, B, t, F::FIN | F::ACK, b""),
                pkt(5, B, A, t, F::ACK, b""),
                pkt(6, B, A, t, F::FIN | F::ACK, b""),
                pkt(7, A, B, t, F::ACK, b""),
                pkt(8, A, B, t, F::SYN, b""),
                pkt(9, B, A, t, F::SYN | F::ACK, b""),
            ],
            SessionConfig::default(),
        );
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].packets.len(), 8);
        assert_eq!(s[1].packets.len(), 2);
        assert_eq!(s[1].session_index, 1);
    }

    #[test]
    fn syn_without_teardown_stays_in_session() {
        use TcpFlags as F;
        let t = Transport::Tcp;
        let s = assemble_sessions(
            vec![pkt(0, A, B, t, F::SYN, b""), pkt(1, A, B, t, F::SYN, b"")],
            SessionConfig::default(),
        );
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn rst_completes_session() {
        use TcpFlags as F;
        let t = Transport::Tcp;
        let s = assemble_sessions(
            vec![
                pkt(0, A, B, t, F::SYN, b""),
                pkt(1, B, A, t, F::RST | F::ACK, b""),
                pkt(2, A, B, t, F::SYN, b""),
            ],
            SessionConfig::default(),
        );
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn out_of_order_input_is_sorted() {
        let s = assemble_sessions(
            vec![
                pkt(5, B, A, Transport::Udp, 0, b"b"),
                pkt(1, A, B, Transport::Udp, 0, b"a"),
            ],
            SessionConfig::default(),
        );
        assert_eq!(s[0].packets[0].timestamp_us, 1);
        assert_eq!(s[0].packets[0].direction, Direction::Forward);
    }
}
