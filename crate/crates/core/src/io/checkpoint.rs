//! `PTCK` checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PTCK"                      4 bytes
//! version                     u32
//! variant                     str   (u32 byte length + UTF-8)
//! T, D                        u32, u32
//! metadata count              u32, then count × (key str, value str)
//! tensor count                u32, then count × (name str, ndim u32, ndim × u32 extents)
//! payload                     f32 × Σ numel, tensors in table order
//! crc32                       u32 over every preceding byte
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use ptensor::optim::AdamW;
use ptensor::{ParamSet, Tensor};

use super::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PTCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub variant: String,
    pub t: u32,
    pub d: u32,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        if self.buf.len() - self.pos < n {
            return Err(format!("unexpected end of data at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn str(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
}

impl Checkpoint {
    pub fn new(variant: impl Into<String>, t: usize, d: usize) -> Self {
        Self {
            variant: variant.into(),
            t: t as u32,
            d: d as u32,
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        });
    }

    /// Appends every parameter of `params` under `prefix`.
    pub fn push_params(&mut self, prefix: &str, params: &ParamSet<f32>) {
        for e in params.entries() {
            self.push(format!("{prefix}{}", e.name), e.value.shape(), e.value.data().to_vec());
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Copies tensors named `prefix + param name` into `params`, checking shapes.
    pub fn load_params(&self, prefix: &str, params: &mut ParamSet<f32>) -> Result<()> {
        for e in params.entries_mut() {
            let name = format!("{prefix}{}", e.name);
            let t = self
                .tensor(&name)
                .ok_or_else(|| Error::Contract(format!("checkpoint lacks tensor `{name}`")))?;
            if t.shape != e.value.shape() {
                return Err(Error::Contract(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    t.shape,
                    e.value.shape()
                )));
            }
            e.value = Tensor::new(t.shape.clone(), t.data.clone())?;
        }
        Ok(())
    }

    /// Appends AdamW first and second moments under `prefix` plus the step count in metadata.
    pub fn push_moments(&mut self, prefix: &str, params: &ParamSet<f32>, opt: &AdamW<f32>) {
        let (m, v) = opt.moments();
        for (i, e) in params.entries().iter().enumerate() {
            self.push(format!("{prefix}m.{}", e.name), e.value.shape(), m[i].clone());
            self.push(format!("{prefix}v.{}", e.name), e.value.shape(), v[i].clone());
        }
        self.meta.insert(format!("{prefix}step"), opt.step_count().to_string());
    }

    /// Restores moments written by [`Checkpoint::push_moments`].
    pub fn load_moments(&self, prefix: &str, params: &ParamSet<f32>, opt: &mut AdamW<f32>) -> Result<()> {
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for e in params.entries() {
            for (kind, out) in [("m", &mut m), ("v", &mut v)] {
                let name = format!("{prefix}{kind}.{}", e.name);
                let t = self
                    .tensor(&name)
                    .filter(|t| t.data.len() == e.value.len())
                    .ok_or_else(|| Error::Contract(format!("checkpoint lacks optimizer tensor `{name}`")))?;
                out.push(t.data.clone());
            }
        }
        let step = self.meta_parse(&format!("{prefix}step"))?;
        opt.restore(step, m, v);
        Ok(())
    }

    pub fn has_moments(&self, prefix: &str) -> bool {
        self.meta.contains_key(&format!("{prefix}step"))
    }

    pub fn expect_variant(&self, expected: &str) -> Result<()> {
        if self.variant != expected {
            return Err(Error::Incompatible {
                expected: expected.to_string(),
                found: self.variant.clone(),
            });
        }
        Ok(())
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Contract(format!("checkpoint metadata `{key}` missing or malformed")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.variant);
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&self.d.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &s in &t.shape {
                out.extend_from_slice(&(s as u32).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing PTCK header".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(corrupt(format!("crc32 {actual:08x} does not match stored {stored:08x}")));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32().map_err(corrupt)?;
        if version != VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version,
                expected: VERSION,
            });
        }
        let parse = |r: &mut Reader<'_>| -> std::result::Result<Checkpoint, String> {
            let variant = r.str()?;
            let t = r.u32()?;
            let d = r.u32()?;
            let mut meta = BTreeMap::new();
            for _ in 0..r.u32()? {
                let k = r.str()?;
                let v = r.str()?;
                meta.insert(k, v);
            }
            let n = r.u32()? as usize;
            let mut table = Vec::with_capacity(n);
            for _ in 0..n {
                let name = r.str()?;
                let nd = r.u32()? as usize;
                let shape = (0..nd).map(|_| r.u32().map(|v| v as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
                table.push((name, shape));
            }
            let mut tensors = Vec::with_capacity(n);
            for (name, shape) in table {
                let count: usize = shape.iter().product();
                let raw = r.take(count * 4)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                tensors.push(NamedTensor { name, shape, data });
            }
            if r.pos != r.buf.len() {
                return Err(format!("{} trailing bytes after payload", r.buf.len() - r.pos));
            }
            Ok(Checkpoint {
                variant,
                t,
                d,
                meta,
                tensors,
            })
        };
        parse(&mut r).map_err(corrupt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
