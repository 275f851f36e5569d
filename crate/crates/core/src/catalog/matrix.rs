//! Dense per-item matrices and the `AFMX` sidecar format.
//!
//! `AFMX` layout: magic `AFMX`, `u32` rows, `u32` cols, then `rows * cols`
//! little-endian `f32` values in row-major order. Nothing else.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::checksum::Reader;
use crate::error::{Error, Result};

pub const AFMX_MAGIC: &[u8; 4] = b"AFMX";

/// Named pipeline stage a matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    ValenceArousal,
    Reduced256,
    Enriched258,
    Joint128,
}

/// One row per item, ids aligned with rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub stage: Stage,
    pub ids: Vec<String>,
    pub values: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(stage: Stage, ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if ids.len() != values.nrows() {
            return Err(Error::Shape(format!(
                "{} ids for {} rows",
                ids.len(),
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "matrix contains non-finite values".into(),
            ));
        }
        Ok(Self { stage, ids, values })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
}

pub fn encode_afmx(values: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + values.len() * 4);
    out.extend_from_slice(AFMX_MAGIC);
    out.extend_from_slice(&(values.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(values.ncols() as u32).to_le_bytes());
    for &v in values.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_afmx(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = Reader::new(bytes, "AFMX matrix");
    if r.take(4)? != AFMX_MAGIC {
        return Err(Error::Format("not an AFMX matrix".into()));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("AFMX dimensions overflow".into()))?;
    if r.remaining() != expected {
        return Err(Error::Format(format!(
            "AFMX header says {rows}x{cols} but payload has {} bytes",
            r.remaining()
        )));
    }
    let data = (0..rows * cols)
        .map(|_| r.f32().map(f64::from))
        .collect::<Result<Vec<_>>>()?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_afmx(values: &Array2<f64>, path: &Path) -> Result<()> {
    fs::write(path, encode_afmx(values)).map_err(|e| Error::io(path, e))
}

pub fn read_afmx(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_afmx(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_truncated_payload() {
        let m = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = encode_afmx(&m);
        bytes.pop();
        assert!(matches!(decode_afmx(&bytes), Err(Error::Format(_))));
        assert!(decode_afmx(b"AFNN\0\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn header_is_little_endian() {
        let m = Array2::from_shape_vec((1, 3), vec![0.5, -1.0, 2.0]).unwrap();
        let bytes = encode_afmx(&m);
        assert_eq!(&bytes[..12], b"AFMX\x01\0\0\0\x03\0\0\0");
        assert_eq!(&bytes[12..16], &0.5f32.to_le_bytes());
    }

    proptest! {
        #[test]
        fn afmx_round_trip_is_byte_exact(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let mut state = seed;
            let m = Array2::from_shape_simple_fn((rows, cols), || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
            });
            let bytes = encode_afmx(&m);
            let back = decode_afmx(&bytes).unwrap();
            prop_assert_eq!(encode_afmx(&back), bytes);
        }
    }
}
