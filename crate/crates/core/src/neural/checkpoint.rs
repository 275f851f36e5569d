//! `AFNN` network checkpoints.
//!
//! Layout (little endian): magic `AFNN`, version byte, hidden-activation
//! byte, `u32` count of layer sizes followed by the sizes as `u32`, then per
//! layer the weights (`outputs x inputs`, row-major) and the bias as `f32`,
//! and finally a `u64` checksum of every preceding byte.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Layer, Mlp};
use crate::checksum::{checksum64, verify_trailer, Reader};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AFNN";
pub const VERSION: u8 = 1;

pub fn encode(mlp: &Mlp) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(mlp.hidden_activation().code());
    let sizes = mlp.layer_sizes();
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for layer in mlp.layers() {
        for &w in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
    }
    let sum = checksum64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Mlp> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not an AFNN checkpoint".into()));
    }
    let payload = verify_trailer(bytes, "AFNN checkpoint")?;
    let mut r = Reader::new(payload, "AFNN checkpoint");
    r.take(4)?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported AFNN version {version}")));
    }
    let activation = Activation::from_code(r.u8()?)
        .ok_or_else(|| Error::Format("unknown activation code".into()))?;
    let count = r.u32()? as usize;
    if count < 2 {
        return Err(Error::Format(
            "checkpoint lists fewer than two layer sizes".into(),
        ));
    }
    let sizes = (0..count)
        .map(|_| r.u32().map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(count - 1);
    for w in sizes.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let weights = (0..inputs * outputs)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        let bias = (0..outputs)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((outputs, inputs), weights)
                .map_err(|e| Error::Format(e.to_string()))?,
            bias: Array1::from(bias),
        });
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!(
            "AFNN checkpoint has {} trailing bytes after byte {}",
            r.remaining(),
            r.position()
        )));
    }
    Mlp::from_layers(layers, activation)
}

pub fn save(mlp: &Mlp, path: &Path) -> Result<()> {
    fs::write(path, encode(mlp)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
