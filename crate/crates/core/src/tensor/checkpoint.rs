//! Named-parameter container.
//!
//! Layout (all integers little-endian u32):
//! magic `SQGN`, version, parameter count, then per parameter: name length,
//! UTF-8 name, rank, dims, and the raw little-endian f32 values.

use std::path::Path;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SQGN";
const VERSION: u32 = 1;

pub fn encode_checkpoint(store: &ParamStore<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + store.num_scalars() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamStore<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.add(name, Tensor::new(shape, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(store)
}

/// Writes to a temporary sibling and renames, so an interrupted save never
/// clobbers the previous checkpoint.
pub fn save_checkpoint(store: &ParamStore<f32>, path: impl AsRef<Path>) -> Result<()> {
    crate::corpus::write_atomic(path.as_ref(), &encode_checkpoint(store))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add(
            "enc.tok_emb",
            Tensor::matrix(2, 3, vec![1.0, -2.5, 3.25, 0.0, f32::MIN_POSITIVE, 7.0]).unwrap(),
        )
        .unwrap();
        s.add("disc.rf.b", Tensor::scalar(-0.125)).unwrap();
        s.add("vec", Tensor::new(vec![4], vec![0.1, 0.2, 0.3, 0.4]).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample_store();
        let bytes = encode_checkpoint(&s);
        assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint(&sample_store());
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 11);
        assert_eq!(&bytes[16..27], b"enc.tok_emb");
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = encode_checkpoint(&sample_store());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&sample_store(), &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), sample_store());
        assert!(!dir.path().join("m.ckpt.tmp").exists());
    }
}
