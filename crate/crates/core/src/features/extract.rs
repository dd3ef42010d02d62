use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::extract_stats;
use super::{FeatureError, FeatureMatrix, FeatureTensor, ReprTag, Representation};
use crate::capture::{Direction, Session};

/// Payload bytes used by the raw-byte representations.
pub const RAW_LEN: usize = 784;

/// Parameters of the configurable extractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    /// DeepMAL: packets taken from the start of the session.
    pub m: usize,
    /// DeepMAL: payload bytes kept per packet.
    pub n: usize,
    /// Packet-sequence length.
    pub p: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig { m: 2, n: 100, p: 32 }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.m == 0 || self.n == 0 || self.p == 0 {
            return Err(FeatureError::InvalidConfig(format!(
                "m, n and p must be at least 1 (got m={}, n={}, p={})",
                self.m, self.n, self.p
            )));
        }
        Ok(())
    }
}

fn norm(b: u8) -> f32 {
    f32::from(b) / 255.0
}

/// First 784 payload bytes of the session, both directions in packet
/// order, scaled to [0, 1].
pub fn extract_raw784(session: &Session) -> Result<FeatureTensor, FeatureError> {
    if session.total_payload_bytes < RAW_LEN as u64 {
        return Err(FeatureError::InsufficientPayload {
            available: session.total_payload_bytes,
            required: RAW_LEN,
        });
    }
    let values = session.payload_stream().take(RAW_LEN).map(norm).collect();
    Ok(FeatureTensor {
        dims: vec![RAW_LEN],
        values,
        repr: ReprTag::Raw784,
    })
}

/// [`extract_raw784`] viewed as a 28x28 image: `img[i][j] = raw[28 i + j]`.
pub fn extract_img28(session: &Session) -> Result<FeatureTensor, FeatureError> {
    let raw = extract_raw784(session)?;
    Ok(FeatureTensor {
        dims: vec![28, 28],
        values: raw.values,
        repr: ReprTag::Img28,
    })
}

/// Row `k` holds the first `n` payload bytes of packet `k` (zero padded);
/// rows past the last packet are zero.
pub fn extract_deepmal(session: &Session, m: usize, n: usize) -> Result<FeatureTensor, FeatureError> {
    if m == 0 || n == 0 {
        return Err(FeatureError::InvalidConfig("m and n must be at least 1".into()));
    }
    let mut values = vec![0.0f32; m * n];
    for (row, packet) in values.chunks_mut(n).zip(&session.packets) {
        for (v, &b) in row.iter_mut().zip(&packet.payload) {
            *v = norm(b);
        }
    }
    Ok(FeatureTensor {
        dims: vec![m, n],
        values,
        repr: ReprTag::DeepMal { m, n },
    })
}

/// One row per packet for the first `p` packets: payload length in bytes,
/// direction (+1 initiator, -1 responder), seconds since the previous
/// packet (0 for the first). Zero rows pad short sessions.
pub fn extract_pktseq(session: &Session, p: usize) -> Result<FeatureTensor, FeatureError> {
    if p == 0 {
        return Err(FeatureError::InvalidConfig("p must be at least 1".into()));
    }
    let mut values = vec![0.0f32; p * 3];
    let mut prev: Option<u64> = None;
    for (row, packet) in values.chunks_mut(3).zip(&session.packets) {
        row[0] = packet.payload.len() as f32;
        row[1] = match packet.direction {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        };
        row[2] = prev.map_or(0.0, |t| (packet.timestamp_us.saturating_sub(t) as f64 / 1e6) as f32);
        prev = Some(packet.timestamp_us);
    }
    Ok(FeatureTensor {
        dims: vec![p, 3],
        values,
        repr: ReprTag::PktSeq { p },
    })
}

/// Dispatch on representation.
pub fn extract(
    session: &Session,
    repr: Representation,
    config: &ExtractorConfig,
) -> Result<FeatureTensor, FeatureError> {
    match repr {
        Representation::Raw784 => extract_raw784(session),
        Representation::Img28 => extract_img28(session),
        Representation::DeepMal => extract_deepmal(session, config.m, config.n),
        Representation::PktSeq => extract_pktseq(session, config.p),
        Representation::Stats => Ok(extract_stats(session)),
    }
}

/// Extract one representation for many sessions in parallel, preserving
/// order.
pub fn featurize<'a>(
    sessions: impl IntoParallelIterator<Item = &'a Session>,
    repr: Representation,
    config: &ExtractorConfig,
) -> Result<FeatureMatrix, FeatureError> {
    config.validate()?;
    let tensors: Vec<FeatureTensor> = sessions
        .into_par_iter()
        .map(|s| extract(s, repr, config))
        .collect::<Result<_, _>>()?;
    FeatureMatrix::from_tensors(repr.tag(config).dims(), &tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{Endpoint, FlowKey, SessionPacket, Transport};

    pub(crate) fn session_of(packets: Vec<(u64, Direction, Vec<u8>)>) -> Session {
        let a = Endpoint::new("10.0.0.1".parse().unwrap(), 1234);
        let b = Endpoint::new("10.0.0.2".parse().unwrap(), 443);
        let packets: Vec<SessionPacket> = packets
            .into_iter()
            .map(|(t, d, payload)| SessionPacket {
                timestamp_us: t,
                direction: d,
                tcp_flags: 0,
                payload,
            })
            .collect();
        Session {
            key: FlowKey::new(a, b, Transport::Tcp),
            initiator: a,
            total_payload_bytes: packets.iter().map(|p| p.payload.len() as u64).sum(),
            packets,
            session_index: 0,
        }
    }

    #[test]
    fn raw784_scales_and_orders() {
        let mut first = vec![0xffu8];
        first.extend(vec![0u8; 399]);
        let s = session_of(vec![
            (0, Direction::Forward, first),
            (1, Direction::Backward, vec![51u8; 500]),
        ]);
        let t = extract_raw784(&s).unwrap();
        assert_eq!(t.values.len(), 784);
        assert_eq!(t.values[0], 1.0);
        assert_eq!(t.values[400], 0.2);
    }

    #[test]
    fn raw784_requires_payload() {
        let s = session_of(vec![(0, Direction::Forward, vec![1; 783])]);
        assert!(matches!(
            extract_raw784(&s),
            Err(FeatureError::InsufficientPayload { available: 783, .. })
        ));
        let zeros = session_of(vec![(0, Direction::Forward, vec![0; 784])]);
        assert!(extract_raw784(&zeros).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn img28_is_row_major_raw() {
        let s = session_of(vec![(0, Direction::Forward, (0..=255u8).cycle().take(900).collect())]);
        let raw = extract_raw784(&s).unwrap();
        let img = extract_img28(&s).unwrap();
        assert_eq!(img.get2(0, 27), raw.values[27]);
        assert_eq!(img.get2(1, 0), raw.values[28]);
        assert_eq!(img.values, raw.values);
    }

    #[test]
    fn deepmal_pads_and_truncates() {
        let s = session_of(vec![(0, Direction::Forward, b"ab".to_vec())]);
        let t = extract_deepmal(&s, 2, 4).unwrap();
        let a = 0x61 as f32 / 255.0;
        let b = 0x62 as f32 / 255.0;
        assert_eq!(t.values, vec![a, b, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let t = extract_deepmal(&s, 1, 1).unwrap();
        assert_eq!(t.values, vec![a]);
    }

    #[test]
    fn pktseq_definition() {
        let s = session_of(vec![
            (1_000_000, Direction::Forward, vec![0; 10]),
            (1_500_000, Direction::Backward, vec![0; 20]),
        ]);
        let t = extract_pktseq(&s, 3).unwrap();
        assert_eq!(t.values, vec![10.0, 1.0, 0.0, 20.0, -1.0, 0.5, 0.0, 0.0, 0.0]);
        let t = extract_pktseq(&s, 1).unwrap();
        assert_eq!(t.values, vec![10.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_parameters_rejected() {
        let s = session_of(vec![(0, Direction::Forward, vec![1])]);
        assert!(extract_deepmal(&s, 0, 4).is_err());
        assert!(extract_pktseq(&s, 0).is_err());
    }
}
