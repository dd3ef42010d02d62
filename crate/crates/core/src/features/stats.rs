use std::collections::HashSet;

use super::{FeatureTensor, ReprTag};
use crate::capture::{Direction, Session, TcpFlags};

pub const STATS_LEN: usize = 24;

/// Slot names, in vector order.
pub const STATS_NAMES: [&str; STATS_LEN] = [
    "fwd_packets",
    "fwd_bytes",
    "fwd_size_min",
    "fwd_size_mean",
    "fwd_size_max",
    "fwd_size_std",
    "fwd_iat_mean",
    "fwd_iat_std",
    "bwd_packets",
    "bwd_bytes",
    "bwd_size_min",
    "bwd_size_mean",
    "bwd_size_max",
    "bwd_size_std",
    "bwd_iat_mean",
    "bwd_iat_std",
    "duration",
    "packets_per_sec",
    "bytes_per_sec",
    "fwd_packet_ratio",
    "syn_count",
    "fin_rst_count",
    "distinct_sizes",
    "mean_payload_entropy",
];

/// Sample mean and standard deviation (n - 1 denominator). The std of a
/// single value is 0; an empty slice gives zeros.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    match xs.len() {
        0 => (0.0, 0.0),
        1 => (xs[0], 0.0),
        n => {
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (mean, var.sqrt())
        }
    }
}

fn direction_block(session: &Session, dir: Direction) -> [f64; 8] {
    let packets: Vec<_> = session.packets.iter().filter(|p| p.direction == dir).collect();
    let sizes: Vec<f64> = packets.iter().map(|p| p.payload.len() as f64).collect();
    let iats: Vec<f64> = packets
        .windows(2)
        .map(|w| (w[1].timestamp_us - w[0].timestamp_us) as f64 / 1e6)
        .collect();
    let (size_mean, size_std) = mean_std(&sizes);
    let (iat_mean, iat_std) = mean_std(&iats);
    [
        packets.len() as f64,
        sizes.iter().sum(),
        sizes.iter().copied().reduce(f64::min).unwrap_or(0.0),
        size_mean,
        sizes.iter().copied().reduce(f64::max).unwrap_or(0.0),
        size_std,
        iat_mean,
        iat_std,
    ]
}

/// Shannon entropy of a byte string in bits per byte.
fn entropy(bytes: &[u8]) -> f64 {
    let mut counts = [0usize; 256];
    for &b in bytes {
        counts[usize::from(b)] += 1;
    }
    let n = bytes.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Fixed 24-slot flow statistics; see [`STATS_NAMES`] for the layout.
///
/// Payload entropy is averaged over packets that carry payload. Rates are 0
/// for zero-duration sessions.
pub fn extract_stats(session: &Session) -> FeatureTensor {
    let fwd = direction_block(session, Direction::Forward);
    let bwd = direction_block(session, Direction::Backward);
    let n = session.packets.len() as f64;
    let duration = (session.last_timestamp_us() - session.first_timestamp_us()) as f64 / 1e6;
    let (pps, bps) = if duration > 0.0 {
        (n / duration, session.total_payload_bytes as f64 / duration)
    } else {
        (0.0, 0.0)
    };
    let syn = session.packets.iter().filter(|p| p.flags().syn()).count() as f64;
    let fin_rst = session
        .packets
        .iter()
        .map(|p| {
            let f = TcpFlags(p.tcp_flags);
            usize::from(f.fin()) + usize::from(f.rst())
        })
        .sum::<usize>() as f64;
    let distinct = session
        .packets
        .iter()
        .map(|p| p.payload.len())
        .collect::<HashSet<_>>()
        .len() as f64;
    let entropies: Vec<f64> = session
        .packets
        .iter()
        .filter(|p| !p.payload.is_empty())
        .map(|p| entropy(&p.payload))
        .collect();
    let mean_entropy = if entropies.is_empty() {
        0.0
    } else {
        entropies.iter().sum::<f64>() / entropies.len() as f64
    };
    let ratio = if n > 0.0 { fwd[0] / n } else { 0.0 };

    let mut values = Vec::with_capacity(STATS_LEN);
    values.extend(fwd.iter().map(|&v| v as f32));
    values.extend(bwd.iter().map(|&v| v as f32));
    values.extend(
        [duration, pps, bps, ratio, syn, fin_rst, distinct, mean_entropy]
            .iter()
            .map(|&v| v as f32),
    );
    FeatureTensor {
        dims: vec![STATS_LEN],
        values,
        repr: ReprTag::Stats,
    }
}
