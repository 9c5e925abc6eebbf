//! Versioned binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "SUBTOKCK"
//! version   u32      1
//! manifest  u32 length + UTF-8 bytes (JSON hyperparameters)
//! count     u32      number of tensors
//! per tensor:
//!   name    u32 length + UTF-8 bytes
//!   dtype   u8       0 = f32, 1 = f64
//!   ndim    u32
//!   dims    ndim × u32
//!   values  product(dims) × dtype width, raw little-endian
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};

use super::{ParamSet, Tensor};

const MAGIC: &[u8; 8] = b"SUBTOKCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: String,
    /// Stored tensors, widened to f64, with their on-disk dtype.
    pub tensors: Vec<(String, DType, Tensor<f64>)>,
}

impl Checkpoint {
    /// Restores the tensors into a parameter set of element type `T`.
    pub fn to_params<T: Scalar>(&self) -> Result<ParamSet<T>> {
        let mut ps = ParamSet::new();
        for (name, _, t) in &self.tensors {
            ps.add(name.clone(), t.cast())?;
        }
        Ok(ps)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::param("checkpoint", "field exceeds u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint<T: Scalar>(manifest: &str, params: &ParamSet<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, manifest.len())?;
    out.extend_from_slice(manifest.as_bytes());
    put_u32(&mut out, params.len())?;
    for p in params.iter() {
        put_u32(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        out.push(T::DTYPE.tag());
        put_u32(&mut out, p.value.ndim())?;
        for &d in p.value.shape() {
            put_u32(&mut out, d)?;
        }
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", 0, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::format("checkpoint", 0, "non-UTF-8 string"))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::format("checkpoint", 0, "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::format("checkpoint", 0, format!("unsupported version {version}")));
    }
    let manifest = r.string()?;
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let tag = r.take(1)?[0];
        let dtype = DType::from_tag(tag)
            .ok_or_else(|| Error::format("checkpoint", 0, format!("unknown dtype tag {tag}")))?;
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n * dtype.width())?;
        let data: Vec<f64> = match dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        };
        tensors.push((name, dtype, Tensor::from_vec(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::format("checkpoint", 0, "trailing bytes"));
    }
    Ok(Checkpoint { manifest, tensors })
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, manifest: &str, params: &ParamSet<T>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(manifest, params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
