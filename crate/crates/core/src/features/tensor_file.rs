//! `FTNS` tensor files and their companion label files.
//!
//! ```text
//! "FTNS" | version u16 = 1 | dtype u8 = 1 (f32) | rank u8 | dims u32 x rank
//!        | count u64 | count * prod(dims) f32
//! ```
//!
//! Every integer and float is little-endian. The label file holds one UTF-8
//! line `session_id,label,family` per tensor, in tensor order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{FeatureError, FeatureMatrix};

const MAGIC: &[u8; 4] = b"FTNS";
const VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_tensor_file(path: impl AsRef<Path>, tensors: &FeatureMatrix) -> Result<(), FeatureError> {
    let path = path.as_ref();
    let rank = tensors.dims.len();
    if !(1..=3).contains(&rank) || tensors.dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
        return Err(FeatureError::ShapeMismatch {
            expected: vec![],
            found: tensors.dims.clone(),
        });
    }
    if tensors.data.len() % tensors.n_features() != 0 {
        return Err(FeatureError::ShapeMismatch {
            expected: tensors.dims.clone(),
            found: vec![tensors.data.len()],
        });
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(16 + 4 * rank);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.push(DTYPE_F32);
    header.push(rank as u8);
    for &d in &tensors.dims {
        header.extend_from_slice(&(d as u32).to_le_bytes());
    }
    header.extend_from_slice(&(tensors.rows() as u64).to_le_bytes());
    w.write_all(&header).map_err(io_err(path))?;
    for v in &tensors.data {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<FeatureMatrix, FeatureError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let corrupt = |reason: &str| FeatureError::CorruptTensorFile {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    if u16::from_le_bytes([bytes[4], bytes[5]]) != VERSION {
        return Err(corrupt("unsupported version"));
    }
    if bytes[6] != DTYPE_F32 {
        return Err(corrupt("unsupported dtype"));
    }
    let rank = usize::from(bytes[7]);
    if !(1..=3).contains(&rank) {
        return Err(corrupt("rank must be 1..=3"));
    }
    let header_len = 8 + 4 * rank + 8;
    if bytes.len() < header_len {
        return Err(corrupt("truncated header"));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    if dims.contains(&0) {
        return Err(corrupt("zero dimension"));
    }
    let count = u64::from_le_bytes(bytes[8 + 4 * rank..header_len].try_into().unwrap());
    let expected = (count as u128) * dims.iter().map(|&d| d as u128).product::<u128>() * 4;
    if (bytes.len() - header_len) as u128 != expected {
        return Err(corrupt("payload length does not match header"));
    }
    let data = bytes[header_len..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FeatureMatrix { dims, data })
}

/// One line of a label file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorLabel {
    pub session_id: String,
    pub label: String,
    pub family: String,
}

pub fn write_label_file(path: impl AsRef<Path>, labels: &[TensorLabel]) -> Result<(), FeatureError> {
    let path = path.as_ref();
    let mut out = String::new();
    for l in labels {
        for field in [&l.session_id, &l.label, &l.family] {
            if field.contains([',', '\n', '\r']) {
                return Err(FeatureError::InvalidConfig(format!(
                    "label field {field:?} contains a separator"
                )));
            }
        }
        out.push_str(&format!("{},{},{}\n", l.session_id, l.label, l.family));
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_label_file(path: impl AsRef<Path>) -> Result<Vec<TensorLabel>, FeatureError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|line| {
            let mut parts = line.split(',');
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(label), Some(family), None) => Ok(TensorLabel {
                    session_id: id.to_string(),
                    label: label.to_string(),
                    family: family.to_string(),
                }),
                _ => Err(FeatureError::CorruptTensorFile {
                    path: path.to_path_buf(),
                    reason: format!("bad label line {line:?}"),
                }),
            }
        })
        .collect()
}
