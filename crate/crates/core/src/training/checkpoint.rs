//! Binary checkpoint format.
//!
//! `"ICAS1\n"`, entry count, then per entry in name order: name length,
//! UTF-8 name, dtype code, rank, extents, row-major payload. Integers are
//! u64 little-endian, the dtype code is one byte (`1` = f64 LE), and a
//! SHA-256 of every preceding byte closes the file.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::files::write_atomic;
use crate::numerics::Tensor;
use crate::pipeline::ModelParams;

pub const MAGIC: &[u8; 6] = b"ICAS1\n";
pub const DTYPE_F64: u8 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn tensor_hash(t: &Tensor) -> String {
    sha256_hex(&t.to_le_bytes())
}

/// SHA-256 of every parameter, by name.
pub fn parameter_hashes(params: &ModelParams) -> BTreeMap<String, String> {
    params
        .named()
        .into_iter()
        .map(|(n, t)| (n, tensor_hash(t)))
        .collect()
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let named = params.named();
    let mut out = MAGIC.to_vec();
    out.extend((named.len() as u64).to_le_bytes());
    for (name, t) in named {
        out.extend((name.len() as u64).to_le_bytes());
        out.extend(name.as_bytes());
        out.push(DTYPE_F64);
        out.extend((t.rank() as u64).to_le_bytes());
        for &e in t.shape() {
            out.extend((e as u64).to_le_bytes());
        }
        out.extend(t.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend(digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    if bytes.len() < MAGIC.len() + 8 + 32 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("digest mismatch".into()));
    }
    let mut r = Reader {
        bytes: body,
        pos: 0,
    };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count = r.usize()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = r.usize()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?
            .to_string();
        let dtype = r.take(1)?[0];
        if dtype != DTYPE_F64 {
            return Err(Error::Checkpoint(format!("{name}: unknown dtype {dtype}")));
        }
        let rank = r.usize()?;
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: extent overflow")))?;
        let payload = r.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("overflow".into()))?,
        )?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        if out.insert(name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate entry {name}")));
        }
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(out)
}

pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params))
}

pub fn read_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
