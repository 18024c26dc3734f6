//! Binary model container.
//!
//! All integers are little-endian; floats are IEEE-754 `f64` bit patterns, so
//! a reloaded model predicts bit-identically.
//!
//! ```text
//! magic      8 bytes   "RSNDMDL\0"
//! version    u16
//! body_len   u64       byte length of body
//! body:
//!   kind         u8    0 = k-NN, 1 = SVM, 2 = RF
//!   train_seed   u64
//!   labels       u32 count, then per label: u32 byte length + UTF-8
//!   features     u32 count, then per name:  u32 byte length + UTF-8
//!   standardizer per feature f64 mean; per feature f64 std; per feature u8 constant flag
//!   payload      (by kind)
//!     k-NN: u32 k, u32 n, then n × (u32 label, features × f64)
//!     SVM:  u32 machines, then per machine:
//!           u32 positive, u32 negative, f64 C, f64 bias, u32 n_sv,
//!           then n_sv × (f64 coefficient, features × f64)
//!     RF:   u32 trees, then per tree: u32 nodes, then per node:
//!           u8 0 = split: u32 feature, f64 threshold, u32 left, u32 right
//!           u8 1 = leaf:  labels × u32 count
//! crc32      u32       CRC-32 (IEEE) of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{BinaryMachine, ForestModel, KnnModel, Node, Payload, Standardizer, SvmModel, TrainedModel, Tree};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RSNDMDL\0";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 8 + 2 + 8;
const CRC_LEN: usize = 4;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn strs(&mut self, v: &[String]) {
        self.u32(v.len());
        v.iter().for_each(|s| self.str(s));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptModel("invalid UTF-8".into()))
    }
    fn strs(&mut self) -> Result<Vec<String>> {
        let n = self.u32()?;
        (0..n).map(|_| self.str()).collect()
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Serializes a model into the container format.
pub fn encode(model: &TrainedModel) -> Vec<u8> {
    let mut b = Writer(Vec::new());
    b.u8(match model.payload {
        Payload::Knn(_) => 0,
        Payload::Svm(_) => 1,
        Payload::Rf(_) => 2,
    });
    b.u64(model.train_seed);
    b.strs(&model.label_catalog);
    b.strs(&model.feature_names);
    let st = &model.standardizer;
    st.mean.iter().for_each(|&v| b.f64(v));
    st.std.iter().for_each(|&v| b.f64(v));
    st.constant.iter().for_each(|&c| b.u8(c as u8));
    match &model.payload {
        Payload::Knn(k) => {
            b.u32(k.k);
            b.u32(k.instances.len());
            for (row, &l) in k.instances.iter().zip(&k.labels) {
                b.u32(l);
                row.iter().for_each(|&v| b.f64(v));
            }
        }
        Payload::Svm(s) => {
            b.u32(s.machines.len());
            for m in &s.machines {
                b.u32(m.positive);
                b.u32(m.negative);
                b.f64(m.c);
                b.f64(m.bias);
                b.u32(m.support_vectors.len());
                for (sv, &a) in m.support_vectors.iter().zip(&m.coefficients) {
                    b.f64(a);
                    sv.iter().for_each(|&v| b.f64(v));
                }
            }
        }
        Payload::Rf(f) => {
            b.u32(f.trees.len());
            for t in &f.trees {
                b.u32(t.nodes.len());
                for n in &t.nodes {
                    match n {
                        Node::Split { feature, threshold, left, right } => {
                            b.u8(0);
                            b.u32(*feature);
                            b.f64(*threshold);
                            b.u32(*left);
                            b.u32(*right);
                        }
                        Node::Leaf { counts } => {
                            b.u8(1);
                            counts.iter().for_each(|&c| b.u32(c as usize));
                        }
                    }
                }
            }
        }
    }
    let body = b.0;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + CRC_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parses and validates a container produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < HEADER_LEN {
        return Err(if bytes.len() >= 8 && &bytes[..8] != MAGIC { Error::BadMagic } else { Error::Truncated });
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let body_len = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
    let expected = HEADER_LEN.checked_add(body_len).and_then(|n| n.checked_add(CRC_LEN));
    match expected {
        Some(n) if n == bytes.len() => {}
        Some(n) if n > bytes.len() => return Err(Error::Truncated),
        _ => return Err(Error::CorruptModel(format!("length field {body_len} disagrees with file size {}", bytes.len()))),
    }
    let split = bytes.len() - CRC_LEN;
    let stored = u32::from_le_bytes(bytes[split..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..split]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader { buf: &bytes[HEADER_LEN..split], pos: 0 };
    let kind = r.u8()?;
    let train_seed = r.u64()?;
    let label_catalog = r.strs()?;
    let feature_names = r.strs()?;
    let (nl, nf) = (label_catalog.len(), feature_names.len());
    let mean = r.f64s(nf)?;
    let std = r.f64s(nf)?;
    let constant = (0..nf).map(|_| r.u8().map(|v| v != 0)).collect::<Result<Vec<_>>>()?;
    let corrupt = |what: &str| Error::CorruptModel(what.to_string());

    let payload = match kind {
        0 => {
            let k = r.u32()?;
            let n = r.u32()?;
            let mut instances = Vec::with_capacity(n.min(1 << 20));
            let mut labels = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let l = r.u32()?;
                if l >= nl {
                    return Err(corrupt("k-NN label out of range"));
                }
                labels.push(l);
                instances.push(r.f64s(nf)?);
            }
            if k == 0 || k > n {
                return Err(corrupt("k-NN k out of range"));
            }
            Payload::Knn(KnnModel { k, instances, labels })
        }
        1 => {
            let count = r.u32()?;
            if count != nl * nl.saturating_sub(1) / 2 {
                return Err(corrupt("SVM machine count does not match class count"));
            }
            let mut machines = Vec::with_capacity(count);
            for _ in 0..count {
                let positive = r.u32()?;
                let negative = r.u32()?;
                if positive >= nl || negative >= nl {
                    return Err(corrupt("SVM class index out of range"));
                }
                let c = r.f64()?;
                let bias = r.f64()?;
                let nsv = r.u32()?;
                let mut support_vectors = Vec::with_capacity(nsv.min(1 << 20));
                let mut coefficients = Vec::with_capacity(nsv.min(1 << 20));
                for _ in 0..nsv {
                    coefficients.push(r.f64()?);
                    support_vectors.push(r.f64s(nf)?);
                }
                machines.push(BinaryMachine { positive, negative, c, bias, support_vectors, coefficients });
            }
            Payload::Svm(SvmModel { machines })
        }
        2 => {
            let nt = r.u32()?;
            let mut trees = Vec::with_capacity(nt.min(1 << 16));
            for _ in 0..nt {
                let nn = r.u32()?;
                let mut nodes = Vec::with_capacity(nn.min(1 << 20));
                for _ in 0..nn {
                    match r.u8()? {
                        0 => {
                            let feature = r.u32()?;
                            let threshold = r.f64()?;
                            let left = r.u32()?;
                            let right = r.u32()?;
                            if feature >= nf || left >= nn || right >= nn {
                                return Err(corrupt("tree node index out of range"));
                            }
                            nodes.push(Node::Split { feature, threshold, left, right });
                        }
                        1 => {
                            let counts = (0..nl).map(|_| r.u32().map(|c| c as u32)).collect::<Result<Vec<_>>>()?;
                            nodes.push(Node::Leaf { counts });
                        }
                        _ => return Err(corrupt("unknown tree node tag")),
                    }
                }
                if nodes.is_empty() {
                    return Err(corrupt("empty tree"));
                }
                trees.push(Tree { nodes });
            }
            Payload::Rf(ForestModel { trees })
        }
        _ => return Err(corrupt("unknown model kind")),
    };
    if r.pos != r.buf.len() {
        return Err(corrupt("trailing bytes after payload"));
    }
    Ok(TrainedModel {
        label_catalog,
        feature_names,
        standardizer: Standardizer { mean, std, constant },
        payload,
        train_seed,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode(&fs::read(path)?)
}
