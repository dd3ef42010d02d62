use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use super::{ParsedPacket, TcpFlags, Transport};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;
const ETHERTYPE_VLAN_OLD: u16 = 0x9100;

/// Link-layer header types we know how to strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkType {
    /// BSD loopback: 4-byte host-order address family.
    Null,
    Ethernet,
    /// Raw IP, version taken from the first nibble.
    Raw,
    /// OpenBSD loopback: 4-byte network-order address family.
    Loop,
    LinuxSll,
    LinuxSll2,
    Ipv4,
    Ipv6,
    Other(u32),
}

impl From<u32> for LinkType {
    fn from(v: u32) -> Self {
        match v {
            0 => LinkType::Null,
            1 => LinkType::Ethernet,
            101 | 12 | 14 => LinkType::Raw,
            108 => LinkType::Loop,
            113 => LinkType::LinuxSll,
            276 => LinkType::LinuxSll2,
            228 => LinkType::Ipv4,
            229 => LinkType::Ipv6,
            other => LinkType::Other(other),
        }
    }
}

/// Why a frame did not produce a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// ARP, LLDP and anything else that is not IPv4/IPv6.
    NonIp,
    /// A non-first IP fragment; it carries no transport header.
    Fragment,
    /// IP packet whose transport is neither TCP nor UDP (ICMP, GRE, ...).
    OtherTransport,
    /// Headers cut short by the snapshot length or simply malformed.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Packet(ParsedPacket),
    Skipped(SkipReason),
}

/// Strip link, network and transport headers from one captured frame.
pub fn decode_frame(link: LinkType, frame: &[u8], timestamp_us: u64, wirelen: u32) -> Decoded {
    let caplen = frame.len() as u32;
    let l3 = match strip_link(link, frame) {
        Ok(l3) => l3,
        Err(reason) => return Decoded::Skipped(reason),
    };
    let net = match l3 {
        L3::V4(bytes) => parse_ipv4(bytes),
        L3::V6(bytes) => parse_ipv6(bytes),
    };
    let net = match net {
        Ok(net) => net,
        Err(reason) => return Decoded::Skipped(reason),
    };
    let Some(transport) = Transport::from_ip_proto(net.proto) else {
        return Decoded::Skipped(SkipReason::OtherTransport);
    };
    let seg = net.payload;
    let (port_src, port_dst, tcp_flags, payload) = match transport {
        Transport::Tcp => {
            if seg.len() < 20 {
                return Decoded::Skipped(SkipReason::Malformed);
            }
            let data_offset = usize::from(seg[12] >> 4) * 4;
            if data_offset < 20 || data_offset > seg.len() {
                return Decoded::Skipped(SkipReason::Malformed);
            }
            (
                be16(&seg[0..2]),
                be16(&seg[2..4]),
                Some(TcpFlags(seg[13])),
                &seg[data_offset..],
            )
        }
        Transport::Udp => {
            if seg.len() < 8 {
                return Decoded::Skipped(SkipReason::Malformed);
            }
            // The UDP length field bounds the payload; a first fragment or a
            // snapped frame may hold fewer bytes than it announces.
            let udp_len = usize::from(be16(&seg[4..6]));
            let end = if udp_len >= 8 {
                udp_len.min(seg.len())
            } else {
                seg.len()
            };
            (be16(&seg[0..2]), be16(&seg[2..4]), None, &seg[8..end])
        }
    };
    Decoded::Packet(ParsedPacket {
        timestamp_us,
        ip_src: net.src,
        ip_dst: net.dst,
        port_src,
        port_dst,
        transport,
        tcp_flags,
        payload: payload.to_vec(),
        caplen,
        wirelen,
    })
}

enum L3<'a> {
    V4(&'a [u8]),
    V6(&'a [u8]),
}

fn by_version(bytes: &[u8]) -> Result<L3<'_>, SkipReason> {
    match bytes.first().map(|b| b >> 4) {
        Some(4) => Ok(L3::V4(bytes)),
        Some(6) => Ok(L3::V6(bytes)),
        Some(_) => Err(SkipReason::NonIp),
        None => Err(SkipReason::Malformed),
    }
}

fn by_ethertype(ethertype: u16, bytes: &[u8]) -> Result<L3<'_>, SkipReason> {
    match ethertype {
        ETHERTYPE_IPV4 => Ok(L3::V4(bytes)),
        ETHERTYPE_IPV6 => Ok(L3::V6(bytes)),
        _ => Err(SkipReason::NonIp),
    }
}

fn by_address_family(family: u32, bytes: &[u8]) -> Result<L3<'_>, SkipReason> {
    match family {
        2 => Ok(L3::V4(bytes)),
        // AF_INET6 differs between BSDs, Darwin and Linux.
        10 | 24 | 28 | 30 => Ok(L3::V6(bytes)),
        _ => Err(SkipReason::NonIp),
    }
}

fn strip_link(link: LinkType, frame: &[u8]) -> Result<L3<'_>, SkipReason> {
    match link {
        LinkType::Ethernet => {
            if frame.len() < 14 {
                return Err(SkipReason::Malformed);
            }
            let mut ethertype = be16(&frame[12..14]);
            let mut offset = 14;
            while matches!(ethertype, ETHERTYPE_VLAN | ETHERTYPE_QINQ | ETHERTYPE_VLAN_OLD) {
                if frame.len() < offset + 4 {
                    return Err(SkipReason::Malformed);
                }
                ethertype = be16(&frame[offset + 2..offset + 4]);
                offset += 4;
            }
            by_ethertype(ethertype, &frame[offset..])
        }
        LinkType::Null => {
            if frame.len() < 4 {
                return Err(SkipReason::Malformed);
            }
            let le = u32::from_le_bytes(frame[0..4].try_into().unwrap());
            let be = u32::from_be_bytes(frame[0..4].try_into().unwrap());
            // Host order is unknown; the family value is small either way.
            let family = if le < 0x10000 { le } else { be };
            by_address_family(family, &frame[4..])
        }
        LinkType::Loop => {
            if frame.len() < 4 {
                return Err(SkipReason::Malformed);
            }
            let family = u32::from_be_bytes(frame[0..4].try_into().unwrap());
            by_address_family(family, &frame[4..])
        }
        LinkType::Raw => by_version(frame),
        LinkType::Ipv4 => Ok(L3::V4(frame)),
        LinkType::Ipv6 => Ok(L3::V6(frame)),
        LinkType::LinuxSll => {
            if frame.len() < 16 {
                return Err(SkipReason::Malformed);
            }
            by_ethertype(be16(&frame[14..16]), &frame[16..])
        }
        LinkType::LinuxSll2 => {
            if frame.len() < 20 {
                return Err(SkipReason::Malformed);
            }
            by_ethertype(be16(&frame[0..2]), &frame[20..])
        }
        LinkType::Other(_) => Err(SkipReason::NonIp),
    }
}

struct NetLayer<'a> {
    src: IpAddr,
    dst: IpAddr,
    proto: u8,
    payload: &'a [u8],
}

fn parse_ipv4(bytes: &[u8]) -> Result<NetLayer<'_>, SkipReason> {
    if bytes.len() < 20 || bytes[0] >> 4 != 4 {
        return Err(SkipReason::Malformed);
    }
    let ihl = usize::from(bytes[0] & 0x0f) * 4;
    if ihl < 20 || ihl > bytes.len() {
        return Err(SkipReason::Malformed);
    }
    let frag = be16(&bytes[6..8]);
    if frag & 0x1fff != 0 {
        return Err(SkipReason::Fragment);
    }
    // Total length trims Ethernet padding; a snapped frame may be shorter.
    let total_len = usize::from(be16(&bytes[2..4]));
    let end = if total_len >= ihl {
        total_len.min(bytes.len())
    } else {
        bytes.len()
    };
    let src = Ipv4Addr::from(<[u8; 4]>::try_from(&bytes[12..16]).unwrap());
    let dst = Ipv4Addr::from(<[u8; 4]>::try_from(&bytes[16..20]).unwrap());
    Ok(NetLayer {
        src: IpAddr::V4(src),
        dst: IpAddr::V4(dst),
        proto: bytes[9],
        payload: &bytes[ihl..end],
    })
}

fn parse_ipv6(bytes: &[u8]) -> Result<NetLayer<'_>, SkipReason> {
    if bytes.len() < 40 || bytes[0] >> 4 != 6 {
        return Err(SkipReason::Malformed);
    }
    let payload_len = usize::from(be16(&bytes[4..6]));
    let end = if payload_len == 0 {
        // Jumbogram or unknown; take what was captured.
        bytes.len()
    } else {
        (40 + payload_len).min(bytes.len())
    };
    let src = Ipv6Addr::from(<[u8; 16]>::try_from(&bytes[8..24]).unwrap());
    let dst = Ipv6Addr::from(<[u8; 16]>::try_from(&bytes[24..40]).unwrap());
    let mut next = bytes[6];
    let mut offset = 40;
    loop {
        match next {
            // hop-by-hop, routing, destination options
            0 | 43 | 60 => {
                if end < offset + 8 {
                    return Err(SkipReason::Malformed);
                }
                next = bytes[offset];
                offset += (usize::from(bytes[offset + 1]) + 1) * 8;
            }
            44 => {
                if end < offset + 8 {
                    return Err(SkipReason::Malformed);
                }
                let frag = be16(&bytes[offset + 2..offset + 4]);
                if frag & 0xfff8 != 0 {
                    return Err(SkipReason::Fragment);
                }
                next = bytes[offset];
                offset += 8;
            }
            // authentication header
            51 => {
                if end < offset + 8 {
                    return Err(SkipReason::Malformed);
                }
                next = bytes[offset];
                offset += (usize::from(bytes[offset + 1]) + 2) * 4;
            }
            _ => break,
        }
        if offset > end {
            return Err(SkipReason::Malformed);
        }
    }
    Ok(NetLayer {
        src: IpAddr::V6(src),
        dst: IpAddr::V6(dst),
        proto: next,
        payload: &bytes[offset..end],
    })
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ipv4_udp(payload: &[u8], frag: u16) -> Vec<u8> {
        let total = 20 + 8 + payload.len();
        let mut v = vec![
            0x45,
            0x00,
            (total >> 8) as u8,
            total as u8,
            0x00,
            0x01,
            (frag >> 8) as u8,
            frag as u8,
            64,
            17,
            0,
            0,
            10,
            0,
            0,
            1,
            10,
            0,
            0,
            2,
        ];
        let ulen = 8 + payload.len();
        v.extend_from_slice(&[0x30, 0x39, 0x00, 0x35, (ulen >> 8) as u8, ulen as u8, 0, 0]);
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn raw_ipv4_udp_payload_extracted() {
        let frame = ipv4_udp(b"abcd", 0);
        let Decoded::Packet(p) = decode_frame(LinkType::Raw, &frame, 7, frame.len() as u32) else {
            panic!("expected packet");
        };
        assert_eq!(p.payload, b"abcd");
        assert_eq!((p.port_src, p.port_dst), (12345, 53));
        assert_eq!(p.transport, Transport::Udp);
        assert_eq!(p.tcp_flags, None);
        assert_eq!(p.timestamp_us, 7);
    }

    #[test]
    fn later_fragments_are_skipped() {
        let frame = ipv4_udp(b"abcd", 0x0010);
        assert_eq!(
            decode_frame(LinkType::Raw, &frame, 0, 0),
            Decoded::Skipped(SkipReason::Fragment)
        );
        // first fragment (MF set, offset 0) still yields a packet
        let frame = ipv4_udp(b"abcd", 0x2000);
        assert!(matches!(decode_frame(LinkType::Raw, &frame, 0, 0), Decoded::Packet(_)));
    }

    #[test]
    fn ethernet_padding_is_trimmed() {
        let mut frame = vec![0u8; 12];
        frame.extend_from_slice(&[0x08, 0x00]);
        frame.extend(ipv4_udp(b"x", 0));
        frame.resize(60, 0);
        let Decoded::Packet(p) = decode_frame(LinkType::Ethernet, &frame, 0, 60) else {
            panic!("expected packet");
        };
        assert_eq!(p.payload, b"x");
    }

    #[test]
    fn vlan_tag_is_walked() {
        let mut frame = vec![0u8; 12];
        frame.extend_from_slice(&[0x81, 0x00, 0x00, 0x05, 0x08, 0x00]);
        frame.extend(ipv4_udp(b"hi", 0));
        assert!(matches!(
            decode_frame(LinkType::Ethernet, &frame, 0, 0),
            Decoded::Packet(ref p) if p.payload == b"hi"
        ));
    }

    #[test]
    fn arp_is_non_ip() {
        let mut frame = vec![0u8; 12];
        frame.extend_from_slice(&[0x08, 0x06]);
        frame.extend_from_slice(&[0u8; 28]);
        assert_eq!(
            decode_frame(LinkType::Ethernet, &frame, 0, 0),
            Decoded::Skipped(SkipReason::NonIp)
        );
    }

    #[test]
    fn icmp_is_other_transport() {
        let mut frame = ipv4_udp(b"", 0);
        frame[9] = 1;
        assert_eq!(
            decode_frame(LinkType::Raw, &frame, 0, 0),
            Decoded::Skipped(SkipReason::OtherTransport)
        );
    }

    #[test]
    fn ipv6_tcp_through_hop_by_hop() {
        let tcp_payload = b"GET /";
        let mut tcp = vec![0u8; 20];
        tcp[0..2].copy_from_slice(&443u16.to_be_bytes());
        tcp[2..4].copy_from_slice(&50000u16.to_be_bytes());
        tcp[12] = 5 << 4;
        tcp[13] = TcpFlags::PSH | TcpFlags::ACK;
        tcp.extend_from_slice(tcp_payload);
        let mut hbh = vec![6u8, 0, 0, 0, 0, 0, 0, 0];
        hbh.extend(tcp);
        let mut v6 = vec![0x60, 0, 0, 0];
        v6.extend_from_slice(&(hbh.len() as u16).to_be_bytes());
        v6.push(0); // next header: hop-by-hop
        v6.push(64);
        v6.extend_from_slice(&Ipv6Addr::LOCALHOST.octets());
        v6.extend_from_slice(&Ipv6Addr::LOCALHOST.octets());
        v6.extend(hbh);
        let Decoded::Packet(p) = decode_frame(LinkType::Raw, &v6, 0, 0) else {
            panic!("expected packet");
        };
        assert_eq!(p.payload, tcp_payload);
        assert_eq!(p.port_src, 443);
        assert!(p.tcp_flags.unwrap().ack());
    }

    #[test]
    fn truncated_tcp_header_is_malformed() {
        let mut frame = ipv4_udp(b"", 0);
        frame[9] = 6;
        assert_eq!(
            decode_frame(LinkType::Raw, &frame, 0, 0),
            Decoded::Skipped(SkipReason::Malformed)
        );
    }
}
