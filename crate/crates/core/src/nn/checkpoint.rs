//! Versioned binary checkpoints.
//!
//! Layout (little endian): magic `DYNSYNCKPT`, `u32` format version, `u64`
//! length and bytes of a JSON metadata document, `u64` tensor count, then per
//! tensor a `u64`-prefixed UTF-8 name, `u64` rank, `u64` dimensions and the
//! `f64` data. A SHA-256 digest of everything before it closes the file.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 10] = b"DYNSYNCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Checkpoint {
        Checkpoint {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: data.to_vec(),
        });
    }

    pub fn push_vec(&mut self, name: impl Into<String>, data: &[f64]) {
        self.push(name, &[data.len()], data);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("json value serializes");
        put_u64(&mut out, meta.len() as u64);
        out.extend_from_slice(&meta);
        put_u64(&mut out, self.tensors.len() as u64);
        for t in &self.tensors {
            put_u64(&mut out, t.name.len() as u64);
            out.extend_from_slice(t.name.as_bytes());
            put_u64(&mut out, t.shape.len() as u64);
            for &d in &t.shape {
                put_u64(&mut out, d as u64);
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::format("checkpoint", "not a checkpoint file"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum("checkpoint".into()));
        }
        let mut r = Reader {
            bytes: body,
            at: MAGIC.len(),
        };
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let meta_len = r.len()?;
        let meta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::format("checkpoint", e))?;
        let n = r.u64()?;
        let mut tensors = Vec::new();
        for _ in 0..n {
            let name_len = r.len()?;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|e| Error::format("checkpoint", e))?;
            let rank = r.len()?;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.len()?);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::format("checkpoint", "tensor too large"))?;
            let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::format("checkpoint", "tensor too large"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        if r.at != body.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::format("checkpoint", "length overflow"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new(serde_json::json!({"step": 12, "actor": "flat"}));
        c.push("w", &[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, -0.5]);
        c.push_vec("log_alpha", &[-1.25]);
        c
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.get("w").unwrap().shape, vec![2, 3]);
        assert!(back.get("nope").is_err());
    }

    #[test]
    fn detects_corruption() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checksum(_))));
        assert!(Checkpoint::from_bytes(&bytes[..20]).is_err());
        assert!(Checkpoint::from_bytes(b"garbage").is_err());
    }

    #[test]
    fn rejects_other_versions() {
        let mut bytes = sample().to_bytes();
        bytes[MAGIC.len()] = 9;
        let n = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..n]);
        bytes[n..].copy_from_slice(&digest);
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { .. })));
    }
}
