//! `PTDS` distillation dataset.
//!
//! Layout (little-endian): `"PTDS"`, version `u32`, `T u32`, `D u32`,
//! count `u64`, then `count` fixed-stride records of `f32`, then a CRC32 of
//! every preceding byte. A record holds, in order: history `T·2D`, action
//! context `2D`, command `6`, teacher action `D`, object position `3`,
//! clean joint positions `D`, clean joint velocities `D`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PTDS";
pub const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 4 + 4 + 8;

/// Borrowed view of one record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleView<'a> {
    pub history: &'a [f32],
    pub action_ctx: &'a [f32],
    pub command: &'a [f32],
    pub teacher_action: &'a [f32],
    pub obj_pos: &'a [f32],
    pub q: &'a [f32],
    pub qdot: &'a [f32],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub t: usize,
    pub d: usize,
    pub data: Vec<f32>,
}

impl Dataset {
    pub fn new(t: usize, d: usize) -> Self {
        Self { t, d, data: Vec::new() }
    }

    pub fn stride_for(t: usize, d: usize) -> usize {
        2 * t * d + 2 * d + 6 + d + 3 + 2 * d
    }

    pub fn stride(&self) -> usize {
        Self::stride_for(self.t, self.d)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.stride()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Appends one record given as f64 parts.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        history: &[f64],
        action_ctx: &[f64],
        command: &[f64],
        teacher_action: &[f64],
        obj_pos: &[f64],
        q: &[f64],
        qdot: &[f64],
    ) -> Result<()> {
        let (t, d) = (self.t, self.d);
        let lens = [
            (history.len(), 2 * t * d),
            (action_ctx.len(), 2 * d),
            (command.len(), 6),
            (teacher_action.len(), d),
            (obj_pos.len(), 3),
            (q.len(), d),
            (qdot.len(), d),
        ];
        if lens.iter().any(|(a, b)| a != b) {
            return Err(Error::Contract(format!("dataset record parts have lengths {lens:?}")));
        }
        for part in [history, action_ctx, command, teacher_action, obj_pos, q, qdot] {
            self.data.extend(part.iter().map(|&v| v as f32));
        }
        Ok(())
    }

    pub fn sample(&self, i: usize) -> SampleView<'_> {
        let (t, d) = (self.t, self.d);
        let s = self.stride();
        let rec = &self.data[i * s..(i + 1) * s];
        let (history, rest) = rec.split_at(2 * t * d);
        let (action_ctx, rest) = rest.split_at(2 * d);
        let (command, rest) = rest.split_at(6);
        let (teacher_action, rest) = rest.split_at(d);
        let (obj_pos, rest) = rest.split_at(3);
        let (q, qdot) = rest.split_at(d);
        SampleView {
            history,
            action_ctx,
            command,
            teacher_action,
            obj_pos,
            q,
            qdot,
        }
    }

    /// Applies a seeded permutation to the records.
    pub fn shuffle(&mut self, seed: u64) {
        let n = self.len();
        let s = self.stride();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut out = Vec::with_capacity(self.data.len());
        for &i in &perm {
            out.extend_from_slice(&self.data[i * s..(i + 1) * s]);
        }
        self.data = out;
    }

    /// First `n` records as a new dataset.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            t: self.t,
            d: self.d,
            data: self.data[..n * self.stride()].to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 4 * self.data.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.t as u32).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
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
        if bytes.len() < HEADER + 4 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing PTDS header".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("crc32 mismatch".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version,
                expected: VERSION,
            });
        }
        let (t, d) = (u32_at(8) as usize, u32_at(12) as usize);
        let count = u64::from_le_bytes(body[16..24].try_into().expect("8 bytes")) as usize;
        let payload = &body[HEADER..];
        if payload.len() != count * Self::stride_for(t, d) * 4 {
            return Err(corrupt(format!("payload of {} bytes does not hold {count} records", payload.len())));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self { t, d, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
