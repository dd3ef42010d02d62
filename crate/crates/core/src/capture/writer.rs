//! Minimal pcap writer used by the synthetic corpus generator and tests.
//! Frames are Ethernet II with valid IPv4/IPv6 and TCP/UDP checksums.

use std::io::{self, Write};
use std::net::IpAddr;

use super::{Endpoint, Transport};

/// Classic little-endian microsecond pcap, link type Ethernet.
pub struct PcapWriter<W: Write> {
    out: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        out.write_all(&0xa1b2_c3d4u32.to_le_bytes())?;
        out.write_all(&2u16.to_le_bytes())?;
        out.write_all(&4u16.to_le_bytes())?;
        out.write_all(&0i32.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&65535u32.to_le_bytes())?;
        out.write_all(&1u32.to_le_bytes())?;
        Ok(PcapWriter { out })
    }

    pub fn write_frame(&mut self, timestamp_us: u64, frame: &[u8]) -> io::Result<()> {
        let secs = (timestamp_us / 1_000_000) as u32;
        let micros = (timestamp_us % 1_000_000) as u32;
        self.out.write_all(&secs.to_le_bytes())?;
        self.out.write_all(&micros.to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(frame)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Build an Ethernet frame carrying one TCP or UDP packet.
///
/// Both endpoints must share an IP version.
pub fn build_frame(src: Endpoint, dst: Endpoint, transport: Transport, tcp_flags: u8, payload: &[u8]) -> Vec<u8> {
    let mut l4 = match transport {
        Transport::Tcp => {
            let mut h = vec![0u8; 20];
            h[0..2].copy_from_slice(&src.port.to_be_bytes());
            h[2..4].copy_from_slice(&dst.port.to_be_bytes());
            h[12] = 5 << 4;
            h[13] = tcp_flags;
            h[14..16].copy_from_slice(&65535u16.to_be_bytes());
            h
        }
        Transport::Udp => {
            let mut h = vec![0u8; 8];
            h[0..2].copy_from_slice(&src.port.to_be_bytes());
            h[2..4].copy_from_slice(&dst.port.to_be_bytes());
            h[4..6].copy_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
            h
        }
    };
    l4.extend_from_slice(payload);
    let proto = transport as u8;

    let mut pseudo = Vec::with_capacity(40);
    let (ethertype, l3_header) = match (src.addr, dst.addr) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            pseudo.extend_from_slice(&s.octets());
            pseudo.extend_from_slice(&d.octets());
            pseudo.extend_from_slice(&[0, proto]);
            pseudo.extend_from_slice(&(l4.len() as u16).to_be_bytes());
            let mut h = vec![0u8; 20];
            h[0] = 0x45;
            h[2..4].copy_from_slice(&((20 + l4.len()) as u16).to_be_bytes());
            h[6] = 0x40; // don't fragment
            h[8] = 64;
            h[9] = proto;
            h[12..16].copy_from_slice(&s.octets());
            h[16..20].copy_from_slice(&d.octets());
            let c = checksum(&[&h]);
            h[10..12].copy_from_slice(&c.to_be_bytes());
            (0x0800u16, h)
        }
        (IpAddr::V6(s), IpAddr::V6(d)) => {
            pseudo.extend_from_slice(&s.octets());
            pseudo.extend_from_slice(&d.octets());
            pseudo.extend_from_slice(&(l4.len() as u32).to_be_bytes());
            pseudo.extend_from_slice(&[0, 0, 0, proto]);
            let mut h = vec![0u8; 40];
            h[0] = 0x60;
            h[4..6].copy_from_slice(&(l4.len() as u16).to_be_bytes());
            h[6] = proto;
            h[7] = 64;
            h[8..24].copy_from_slice(&s.octets());
            h[24..40].copy_from_slice(&d.octets());
            (0x86ddu16, h)
        }
        _ => panic!("build_frame: mixed IP versions"),
    };
    let csum_at = match transport {
        Transport::Tcp => 16,
        Transport::Udp => 6,
    };
    let mut c = checksum(&[&pseudo, &l4]);
    if transport == Transport::Udp && c == 0 {
        c = 0xffff;
    }
    l4[csum_at..csum_at + 2].copy_from_slice(&c.to_be_bytes());

    let mut frame = Vec::with_capacity(14 + l3_header.len() + l4.len());
    frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x02]);
    frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
    frame.extend_from_slice(&ethertype.to_be_bytes());
    frame.extend(l3_header);
    frame.extend(l4);
    frame
}

/// Internet checksum over the concatenation of `parts`.
fn checksum(parts: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    let mut carry: Option<u8> = None;
    for part in parts {
        for &b in part.iter() {
            match carry.take() {
                Some(hi) => sum += u32::from(u16::from_be_bytes([hi, b])),
                None => carry = Some(b),
            }
        }
    }
    if let Some(hi) = carry {
        sum += u32::from(u16::from_be_bytes([hi, 0]));
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ipv4_header_checksum_verifies() {
        let a = Endpoint::new("10.0.0.1".parse().unwrap(), 1);
        let b = Endpoint::new("10.0.0.2".parse().unwrap(), 2);
        let f = build_frame(a, b, Transport::Udp, 0, b"abc");
        // Summing a header including its checksum yields zero.
        assert_eq!(checksum(&[&f[14..34]]), 0);
    }
}
