//! Sample batches with provenance, CSV and binary export.

use std::io::{Read, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{PgnError, Result};
use crate::rng::CHUNK_SIZE;

const MAGIC: &[u8; 4] = b"PGN1";

/// SHA-256 of the canonical JSON encoding of `spec`.
pub fn spec_hash<T: Serialize + ?Sized>(spec: &T) -> Result<[u8; 32]> {
    let bytes = serde_json::to_vec(spec)?;
    Ok(Sha256::digest(&bytes).into())
}

/// `n` draws of a `d`-dimensional variate, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    values: Vec<f64>,
    d: usize,
    seed: u64,
    spec_hash: [u8; 32],
}

impl SampleBatch {
    pub fn new(values: Vec<f64>, d: usize, seed: u64, spec_hash: [u8; 32]) -> Result<Self> {
        if d == 0 || values.len() % d != 0 {
            return Err(PgnError::Domain(format!(
                "{} values do not form rows of width {d}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PgnError::Domain(format!("non-finite variate at index {i}")));
        }
        Ok(SampleBatch {
            values,
            d,
            seed,
            spec_hash,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec_hash(&self) -> &[u8; 32] {
        &self.spec_hash
    }

    pub fn spec_hash_hex(&self) -> String {
        hex::encode(self.spec_hash)
    }

    /// Stream ids consumed, one per chunk of [`CHUNK_SIZE`] rows.
    pub fn stream_ids(&self) -> std::ops::Range<u64> {
        0..self.n().div_ceil(CHUNK_SIZE) as u64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().skip(k).step_by(self.d).copied().collect()
    }

    /// One row per draw, coordinates comma-separated, LF line endings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = String::new();
        for i in 0..self.n() {
            line.clear();
            for (k, v) in self.row(i).iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{v:e}"));
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Header `PGN1 | u32 d | u64 n | u64 seed | [u8; 32] hash`, then
    /// `n·d` little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.spec_hash)?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(PgnError::Schema("not a PGN1 batch file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let mut raw = vec![0u8; n * d * 8];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        SampleBatch::new(values, d, seed, hash)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let b = SampleBatch::new(vec![1.0, -2.5, 3.0, 4.0], 2, 99, [7u8; 32]).unwrap();
        let mut buf = Vec::new();
        b.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 32 + 32);
        let back = SampleBatch::read_binary(&buf[..]).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn csv_rows() {
        let b = SampleBatch::new(vec![1.0, 2.0, 3.0, 4.0], 2, 0, [0u8; 32]).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1e0,2e0\n3e0,4e0\n");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(SampleBatch::new(vec![f64::NAN], 1, 0, [0u8; 32]).is_err());
    }
}
