//! `MTCM` model files.
//!
//! ```text
//! "MTCM" | version u16 = 1 | kind u8 | n_features u32 | n_classes u32 | body | crc32 u32
//! ```
//!
//! Kinds: 1 decision tree, 2 forest, 3 knn. Trees are stored in preorder;
//! each node is tag `0` followed by `n_classes` f64 probabilities, or tag
//! `1` followed by feature u32 and threshold f64, then the left and right
//! subtrees. A forest body is `mode u8 | bootstrap u8 | subsample u32 |
//! seed u64 | n_trees u32 | trees`. A knn body is `k u32 | rows u64 |
//! labels u32 x rows | values f32 x rows x n_features`. All little-endian;
//! the CRC covers everything before it.

use std::fs;
use std::path::Path;

use super::{DecisionTree, ForestMode, ForestModel, KnnModel, Model, ModelError, TreeNode};
use crate::features::FeatureMatrix;

const MAGIC: &[u8; 4] = b"MTCM";
const VERSION: u16 = 1;
const KIND_TREE: u8 = 1;
const KIND_FOREST: u8 = 2;
const KIND_KNN: u8 = 3;
const MAX_DEPTH: usize = 10_000;

fn put_tree(out: &mut Vec<u8>, node: &TreeNode) {
    match node {
        TreeNode::Leaf { probs } => {
            out.push(0);
            for p in probs {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            out.push(1);
            out.extend_from_slice(&(*feature as u32).to_le_bytes());
            out.extend_from_slice(&threshold.to_le_bytes());
            put_tree(out, left);
            put_tree(out, right);
        }
    }
}

pub fn write_model(model: &Model) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (kind, nf, nc) = match model {
        Model::Tree(t) => (KIND_TREE, t.n_features, t.n_classes),
        Model::Forest(f) => (KIND_FOREST, f.n_features, f.n_classes),
        Model::Knn(k) => (KIND_KNN, k.x.n_features(), k.n_classes),
    };
    out.push(kind);
    out.extend_from_slice(&(nf as u32).to_le_bytes());
    out.extend_from_slice(&(nc as u32).to_le_bytes());
    match model {
        Model::Tree(t) => put_tree(&mut out, &t.root),
        Model::Forest(f) => {
            out.push(match f.mode {
                ForestMode::RandomForest => 0,
                ForestMode::ExtraTrees => 1,
            });
            out.push(u8::from(f.bootstrap));
            out.extend_from_slice(&(f.feature_subsample as u32).to_le_bytes());
            out.extend_from_slice(&f.seed.to_le_bytes());
            out.extend_from_slice(&(f.trees.len() as u32).to_le_bytes());
            for t in &f.trees {
                put_tree(&mut out, t);
            }
        }
        Model::Knn(k) => {
            out.extend_from_slice(&(k.k as u32).to_le_bytes());
            out.extend_from_slice(&(k.x.rows() as u64).to_le_bytes());
            for &l in &k.y {
                out.extend_from_slice(&(l as u32).to_le_bytes());
            }
            for v in &k.x.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::CorruptModel("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn get_tree(c: &mut Cursor, nf: usize, nc: usize, depth: usize) -> Result<TreeNode, ModelError> {
    if depth > MAX_DEPTH {
        return Err(ModelError::CorruptModel("tree too deep".into()));
    }
    match c.u8()? {
        0 => Ok(TreeNode::Leaf {
            probs: (0..nc).map(|_| c.f64()).collect::<Result<_, _>>()?,
        }),
        1 => {
            let feature = c.u32()? as usize;
            if feature >= nf {
                return Err(ModelError::CorruptModel(format!("split on feature {feature} of {nf}")));
            }
            let threshold = c.f64()?;
            let left = Box::new(get_tree(c, nf, nc, depth + 1)?);
            let right = Box::new(get_tree(c, nf, nc, depth + 1)?);
            Ok(TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            })
        }
        t => Err(ModelError::CorruptModel(format!("bad node tag {t}"))),
    }
}

pub fn read_model(bytes: &[u8]) -> Result<Model, ModelError> {
    if bytes.len() < 4 + 2 + 1 + 8 + 4 || &bytes[..4] != MAGIC {
        return Err(ModelError::CorruptModel("bad magic".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().unwrap()) {
        return Err(ModelError::CorruptModel("checksum mismatch".into()));
    }
    let mut c = Cursor { buf: body, pos: 4 };
    let version = u16::from_le_bytes(c.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::CorruptModel(format!("unsupported version {version}")));
    }
    let kind = c.u8()?;
    let nf = c.u32()? as usize;
    let nc = c.u32()? as usize;
    if nf == 0 || nc == 0 {
        return Err(ModelError::CorruptModel("zero features or classes".into()));
    }
    let model = match kind {
        KIND_TREE => Model::Tree(DecisionTree {
            root: get_tree(&mut c, nf, nc, 0)?,
            n_features: nf,
            n_classes: nc,
        }),
        KIND_FOREST => {
            let mode = match c.u8()? {
                0 => ForestMode::RandomForest,
                1 => ForestMode::ExtraTrees,
                m => return Err(ModelError::CorruptModel(format!("bad forest mode {m}"))),
            };
            let bootstrap = c.u8()? != 0;
            let feature_subsample = c.u32()? as usize;
            let seed = c.u64()?;
            let n_trees = c.u32()? as usize;
            if n_trees == 0 {
                return Err(ModelError::CorruptModel("forest without trees".into()));
            }
            let trees = (0..n_trees)
                .map(|_| get_tree(&mut c, nf, nc, 0))
                .collect::<Result<_, _>>()?;
            Model::Forest(ForestModel {
                trees,
                mode,
                feature_subsample,
                bootstrap,
                seed,
                n_features: nf,
                n_classes: nc,
            })
        }
        KIND_KNN => {
            let k = c.u32()? as usize;
            let rows = c.u64()? as usize;
            if k == 0 || k > rows {
                return Err(ModelError::CorruptModel("k outside 1..=rows".into()));
            }
            let need = rows
                .checked_mul(4)
                .and_then(|l| rows.checked_mul(nf)?.checked_mul(4)?.checked_add(l))
                .ok_or_else(|| ModelError::CorruptModel("size overflow".into()))?;
            if body.len() - c.pos != need {
                return Err(ModelError::CorruptModel("knn payload length mismatch".into()));
            }
            let y = (0..rows)
                .map(|_| {
                    let l = c.u32()? as usize;
                    if l >= nc {
                        return Err(ModelError::CorruptModel(format!("label {l} of {nc}")));
                    }
                    Ok(l)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let data = c
                .take(rows * nf * 4)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Model::Knn(KnnModel {
                x: FeatureMatrix { dims: vec![nf], data },
                y,
                k,
                n_classes: nc,
            })
        }
        k => return Err(ModelError::CorruptModel(format!("unknown model kind {k}"))),
    };
    if c.pos != body.len() {
        return Err(ModelError::CorruptModel("trailing bytes".into()));
    }
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, write_model(model)).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_model(&bytes)
}
