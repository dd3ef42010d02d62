use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};

use super::decode::{decode_frame, Decoded, LinkType, SkipReason};
use super::{CaptureError, ParsedPacket};

const PCAP_MAGIC_US: u32 = 0xa1b2_c3d4;
const PCAP_MAGIC_NS: u32 = 0xa1b2_3c4d;
const PCAPNG_SHB: u32 = 0x0a0d_0d0a;
const PCAPNG_BYTE_ORDER: u32 = 0x1a2b_3c4d;

const BLOCK_IDB: u32 = 0x0000_0001;
const BLOCK_OPB: u32 = 0x0000_0002;
const BLOCK_SPB: u32 = 0x0000_0003;
const BLOCK_EPB: u32 = 0x0000_0006;

// Anything larger than this in a record or block header means the file is
// corrupt rather than holding a jumbo frame.
const MAX_RECORD: usize = 64 << 20;

/// Counters collected while reading one capture.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptureStats {
    pub frames: u64,
    pub accepted: u64,
    pub skipped_non_ip: u64,
    pub skipped_fragments: u64,
    pub skipped_other_transport: u64,
    pub skipped_malformed: u64,
    /// Records cut short at the end of the file (0 or 1).
    pub truncated_records: u64,
}

impl CaptureStats {
    pub fn skipped(&self) -> u64 {
        self.skipped_non_ip + self.skipped_fragments + self.skipped_other_transport + self.skipped_malformed
    }

    fn count_skip(&mut self, reason: SkipReason) {
        match reason {
            SkipReason::NonIp => self.skipped_non_ip += 1,
            SkipReason::Fragment => self.skipped_fragments += 1,
            SkipReason::OtherTransport => self.skipped_other_transport += 1,
            SkipReason::Malformed => self.skipped_malformed += 1,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u16(self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        match self {
            Endian::Little => u16::from_le_bytes(a),
            Endian::Big => u16::from_be_bytes(a),
        }
    }

    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(a),
            Endian::Big => u32::from_be_bytes(a),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Interface {
    link: LinkType,
    /// Timestamp units per second, as a power of 10 or 2.
    tsresol: TsResolution,
}

#[derive(Debug, Clone, Copy)]
enum TsResolution {
    Pow10(u32),
    Pow2(u32),
}

impl TsResolution {
    fn to_micros(self, ticks: u64) -> u64 {
        match self {
            TsResolution::Pow10(6) => ticks,
            TsResolution::Pow10(e) if e > 6 => ticks / 10u64.pow(e - 6),
            TsResolution::Pow10(e) => ticks.saturating_mul(10u64.pow(6 - e)),
            TsResolution::Pow2(e) => ((u128::from(ticks) * 1_000_000) >> e).min(u128::from(u64::MAX)) as u64,
        }
    }
}

enum Format {
    Pcap {
        endian: Endian,
        nanos: bool,
        link: LinkType,
    },
    PcapNg {
        endian: Endian,
        interfaces: Vec<Interface>,
    },
}

/// Streaming reader over a pcap or pcapng source.
///
/// Yields TCP/UDP packets in file order. Frames that do not carry a TCP or
/// UDP packet are counted in [`CaptureStats`]; a record truncated at the end
/// of the file ends the stream and is counted as well.
pub struct CaptureReader<R> {
    inner: R,
    format: Format,
    stats: CaptureStats,
    done: bool,
    error: Option<io::Error>,
}

impl CaptureReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CaptureError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| CaptureError::UnreadableFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        CaptureReader::new(BufReader::new(file)).map_err(|reason| CaptureError::UnreadableFile {
            path: path.to_path_buf(),
            reason,
        })
    }
}

impl<R: Read> CaptureReader<R> {
    /// Read and validate the file header.
    pub fn new(mut inner: R) -> Result<Self, String> {
        let mut magic = [0u8; 4];
        read_full(&mut inner, &mut magic)
            .map_err(|e| e.to_string())?
            .then_some(())
            .ok_or("file shorter than a capture header")?;
        let le = u32::from_le_bytes(magic);
        let be = u32::from_be_bytes(magic);
        let format = if le == PCAPNG_SHB {
            let mut hdr = [0u8; 8];
            if !read_full(&mut inner, &mut hdr).map_err(|e| e.to_string())? {
                return Err("truncated pcapng section header".into());
            }
            let endian = match (
                u32::from_le_bytes(hdr[4..8].try_into().unwrap()),
                u32::from_be_bytes(hdr[4..8].try_into().unwrap()),
            ) {
                (PCAPNG_BYTE_ORDER, _) => Endian::Little,
                (_, PCAPNG_BYTE_ORDER) => Endian::Big,
                _ => return Err("bad pcapng byte-order magic".into()),
            };
            let total = endian.u32(&hdr[0..4]) as usize;
            if !(28..=MAX_RECORD).contains(&total) {
                return Err("bad pcapng section header length".into());
            }
            let mut rest = vec![0u8; total - 12];
            if !read_full(&mut inner, &mut rest).map_err(|e| e.to_string())? {
                return Err("truncated pcapng section header".into());
            }
            Format::PcapNg {
                endian,
                interfaces: Vec::new(),
            }
        } else {
            let (endian, nanos) = match (le, be) {
                (PCAP_MAGIC_US, _) => (Endian::Little, false),
                (PCAP_MAGIC_NS, _) => (Endian::Little, true),
                (_, PCAP_MAGIC_US) => (Endian::Big, false),
                (_, PCAP_MAGIC_NS) => (Endian::Big, true),
                _ => return Err(format!("unknown capture magic {:02x?}", magic)),
            };
            let mut hdr = [0u8; 20];
            if !read_full(&mut inner, &mut hdr).map_err(|e| e.to_string())? {
                return Err("truncated pcap global header".into());
            }
            Format::Pcap {
                endian,
                nanos,
                link: LinkType::from(endian.u32(&hdr[16..20]) & 0x0fff_ffff),
            }
        };
        Ok(CaptureReader {
            inner,
            format,
            stats: CaptureStats::default(),
            done: false,
            error: None,
        })
    }

    pub fn stats(&self) -> CaptureStats {
        self.stats
    }

    /// An I/O error other than end-of-file that stopped the stream, if any.
    pub fn take_error(&mut self) -> Option<io::Error> {
        self.error.take()
    }

    fn truncated(&mut self) -> Option<(LinkType, Vec<u8>, u64, u32)> {
        self.stats.truncated_records += 1;
        self.done = true;
        log::warn!("capture ends with a truncated record");
        None
    }

    /// Next raw frame: link type, bytes, timestamp (µs), wire length.
    fn next_frame(&mut self) -> Option<(LinkType, Vec<u8>, u64, u32)> {
        if self.done {
            return None;
        }
        match &mut self.format {
            Format::Pcap { endian, nanos, link } => {
                let (endian, nanos, link) = (*endian, *nanos, *link);
                let mut hdr = [0u8; 16];
                match read_exact_or_eof(&mut self.inner, &mut hdr) {
                    Ok(ReadOutcome::Full) => {}
                    Ok(ReadOutcome::Eof) => {
                        self.done = true;
                        return None;
                    }
                    Ok(ReadOutcome::Partial) => return self.truncated(),
                    Err(e) => return self.fail(e),
                }
                let secs = u64::from(endian.u32(&hdr[0..4]));
                let frac = u64::from(endian.u32(&hdr[4..8]));
                let incl = endian.u32(&hdr[8..12]) as usize;
                let orig = endian.u32(&hdr[12..16]);
                if incl > MAX_RECORD {
                    return self.truncated();
                }
                let mut data = vec![0u8; incl];
                match read_exact_or_eof(&mut self.inner, &mut data) {
                    Ok(ReadOutcome::Full) => {}
                    Ok(_) => return self.truncated(),
                    Err(e) => return self.fail(e),
                }
                let micros = if nanos { frac / 1000 } else { frac };
                Some((link, data, secs * 1_000_000 + micros, orig))
            }
            Format::PcapNg { .. } => self.next_ng_frame(),
        }
    }

    fn next_ng_frame(&mut self) -> Option<(LinkType, Vec<u8>, u64, u32)> {
        loop {
            let Format::PcapNg { endian, .. } = &self.format else {
                unreachable!()
            };
            let mut endian = *endian;
            let mut hdr = [0u8; 8];
            match read_exact_or_eof(&mut self.inner, &mut hdr) {
                Ok(ReadOutcome::Full) => {}
                Ok(ReadOutcome::Eof) => {
                    self.done = true;
                    return None;
                }
                Ok(ReadOutcome::Partial) => return self.truncated(),
                Err(e) => return self.fail(e),
            }
            // The section header type is a byte-order palindrome.
            let block_type = endian.u32(&hdr[0..4]);
            let mut body_and_trailer;
            if block_type == PCAPNG_SHB {
                // A new section may switch byte order; peek the BOM first.
                let mut bom = [0u8; 4];
                match read_exact_or_eof(&mut self.inner, &mut bom) {
                    Ok(ReadOutcome::Full) => {}
                    Ok(_) => return self.truncated(),
                    Err(e) => return self.fail(e),
                }
                endian = if u32::from_le_bytes(bom) == PCAPNG_BYTE_ORDER {
                    Endian::Little
                } else if u32::from_be_bytes(bom) == PCAPNG_BYTE_ORDER {
                    Endian::Big
                } else {
                    return self.truncated();
                };
                let total = endian.u32(&hdr[4..8]) as usize;
                if !(28..=MAX_RECORD).contains(&total) {
                    return self.truncated();
                }
                body_and_trailer = vec![0u8; total - 12];
                match read_exact_or_eof(&mut self.inner, &mut body_and_trailer) {
                    Ok(ReadOutcome::Full) => {}
                    Ok(_) => return self.truncated(),
                    Err(e) => return self.fail(e),
                }
                self.format = Format::PcapNg {
                    endian,
                    interfaces: Vec::new(),
                };
                continue;
            }
            let total = endian.u32(&hdr[4..8]) as usize;
            if total < 12 || total > MAX_RECORD || total % 4 != 0 {
                return self.truncated();
            }
            body_and_trailer = vec![0u8; total - 8];
            match read_exact_or_eof(&mut self.inner, &mut body_and_trailer) {
                Ok(ReadOutcome::Full) => {}
                Ok(_) => return self.truncated(),
                Err(e) => return self.fail(e),
            }
            let body = &body_and_trailer[..total - 12];
            let Format::PcapNg { interfaces, .. } = &mut self.format else {
                unreachable!()
            };
            match block_type {
                BLOCK_IDB => {
                    if body.len() < 8 {
                        return self.truncated();
                    }
                    let link = LinkType::from(u32::from(endian.u16(&body[0..2])));
                    let tsresol = parse_tsresol(endian, &body[8..]);
                    interfaces.push(Interface { link, tsresol });
                }
                BLOCK_EPB => {
                    if body.len() < 20 {
                        return self.truncated();
                    }
                    let iface = endian.u32(&body[0..4]) as usize;
                    let ticks = (u64::from(endian.u32(&body[4..8])) << 32) | u64::from(endian.u32(&body[8..12]));
                    let caplen = endian.u32(&body[12..16]) as usize;
                    let orig = endian.u32(&body[16..20]);
                    let Some(iface) = interfaces.get(iface).copied() else {
                        self.stats.frames += 1;
                        self.stats.skipped_malformed += 1;
                        continue;
                    };
                    if 20 + caplen > body.len() {
                        return self.truncated();
                    }
                    let data = body[20..20 + caplen].to_vec();
                    return Some((iface.link, data, iface.tsresol.to_micros(ticks), orig));
                }
                BLOCK_SPB => {
                    if body.len() < 4 {
                        return self.truncated();
                    }
                    let orig = endian.u32(&body[0..4]);
                    let caplen = (orig as usize).min(body.len() - 4);
                    let Some(iface) = interfaces.first().copied() else {
                        self.stats.frames += 1;
                        self.stats.skipped_malformed += 1;
                        continue;
                    };
                    return Some((iface.link, body[4..4 + caplen].to_vec(), 0, orig));
                }
                BLOCK_OPB => {
                    if body.len() < 20 {
                        return self.truncated();
                    }
                    let iface = usize::from(endian.u16(&body[0..2]));
                    let ticks = (u64::from(endian.u32(&body[4..8])) << 32) | u64::from(endian.u32(&body[8..12]));
                    let caplen = endian.u32(&body[12..16]) as usize;
                    let orig = endian.u32(&body[16..20]);
                    let Some(iface) = interfaces.get(iface).copied() else {
                        self.stats.frames += 1;
                        self.stats.skipped_malformed += 1;
                        continue;
                    };
                    if 20 + caplen > body.len() {
                        return self.truncated();
                    }
                    let data = body[20..20 + caplen].to_vec();
                    return Some((iface.link, data, iface.tsresol.to_micros(ticks), orig));
                }
                _ => {}
            }
        }
    }

    fn fail(&mut self, e: io::Error) -> Option<(LinkType, Vec<u8>, u64, u32)> {
        self.done = true;
        self.error = Some(e);
        None
    }
}

impl<R: Read> Iterator for CaptureReader<R> {
    type Item = ParsedPacket;

    fn next(&mut self) -> Option<ParsedPacket> {
        loop {
            let (link, data, ts, orig) = self.next_frame()?;
            self.stats.frames += 1;
            match decode_frame(link, &data, ts, orig) {
                Decoded::Packet(p) => {
                    self.stats.accepted += 1;
                    return Some(p);
                }
                Decoded::Skipped(reason) => self.stats.count_skip(reason),
            }
        }
    }
}

fn parse_tsresol(endian: Endian, mut opts: &[u8]) -> TsResolution {
    while opts.len() >= 4 {
        let code = endian.u16(&opts[0..2]);
        let len = usize::from(endian.u16(&opts[2..4]));
        if code == 0 {
            break;
        }
        let padded = (len + 3) & !3;
        if opts.len() < 4 + padded {
            break;
        }
        if code == 9 && len >= 1 {
            let v = opts[4];
            return if v & 0x80 == 0 {
                TsResolution::Pow10(u32::from(v))
            } else {
                TsResolution::Pow2(u32::from(v & 0x7f))
            };
        }
        opts = &opts[4 + padded..];
    }
    TsResolution::Pow10(6)
}

enum ReadOutcome {
    Full,
    Eof,
    Partial,
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<ReadOutcome> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Ok(if filled == 0 {
                    ReadOutcome::Eof
                } else {
                    ReadOutcome::Partial
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(ReadOutcome::Full)
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<bool> {
    Ok(matches!(read_exact_or_eof(r, buf)?, ReadOutcome::Full))
}

/// All TCP/UDP packets of one capture plus its reading statistics.
#[derive(Debug, Clone)]
pub struct ParsedCapture {
    pub path: PathBuf,
    pub packets: Vec<ParsedPacket>,
    pub stats: CaptureStats,
}

/// Read a whole capture file into memory.
pub fn parse_capture(path: impl AsRef<Path>) -> Result<ParsedCapture, CaptureError> {
    let path = path.as_ref();
    let mut reader = CaptureReader::open(path)?;
    let packets: Vec<ParsedPacket> = reader.by_ref().collect();
    if let Some(source) = reader.take_error() {
        return Err(CaptureError::Io {
            path: path.to_path_buf(),
            source,
        });
    }
    Ok(ParsedCapture {
        path: path.to_path_buf(),
        packets,
        stats: reader.stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_pcap_is_empty() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&PCAP_MAGIC_US.to_le_bytes());
        bytes.extend_from_slice(&[2, 0, 4, 0]);
        bytes.extend_from_slice(&[0u8; 8]);
        bytes.extend_from_slice(&65535u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        let mut r = CaptureReader::new(&bytes[..]).unwrap();
        assert!(r.next().is_none());
        assert_eq!(r.stats(), CaptureStats::default());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let bytes = [0u8; 24];
        assert!(CaptureReader::new(&bytes[..]).is_err());
        assert!(CaptureReader::new(&bytes[..3]).is_err());
    }

    #[test]
    fn tsresol_conversions() {
        assert_eq!(TsResolution::Pow10(9).to_micros(1_500_000), 1500);
        assert_eq!(TsResolution::Pow10(3).to_micros(2), 2000);
        assert_eq!(TsResolution::Pow2(10).to_micros(1024), 1_000_000);
    }
}
