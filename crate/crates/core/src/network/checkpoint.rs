//! Binary model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        4 bytes  "SPTN"
//! version      u32      1
//! layer_count  u32
//! per layer:
//!   input_dim  u32
//!   output_dim u32
//!   activation u32      0 = relu, 1 = softmax, 2 = identity
//!   weights    f64 x (output_dim * input_dim), row-major
//!   biases     f64 x output_dim
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Activation, Dense, MlpModel};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"SPTN";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("unknown activation id {0}")]
    Activation(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub fn write_to<W: Write>(model: &MlpModel, mut w: W) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(model.depth() as u32).to_le_bytes())?;
    for layer in model.layers() {
        let spec = layer.spec();
        w.write_all(&(spec.input_dim as u32).to_le_bytes())?;
        w.write_all(&(spec.output_dim as u32).to_le_bytes())?;
        w.write_all(&spec.activation.id().to_le_bytes())?;
        for v in layer.weights.as_slice().iter().chain(&layer.biases) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_from<R: Read>(mut r: R) -> Result<MlpModel, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = read_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let input_dim = read_u32(&mut r)? as usize;
        let output_dim = read_u32(&mut r)? as usize;
        let act_id = read_u32(&mut r)?;
        let activation = Activation::from_id(act_id).ok_or(CheckpointError::Activation(act_id))?;
        let weights = read_f64s(&mut r, input_dim * output_dim)?;
        let biases = read_f64s(&mut r, output_dim)?;
        let weights = Matrix::from_vec(output_dim, input_dim, weights)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        layers.push(Dense {
            activation,
            weights,
            biases,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CheckpointError::Malformed("trailing bytes".into()));
    }
    MlpModel::from_layers(layers).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

pub fn save(model: &MlpModel, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    write_to(model, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<MlpModel, CheckpointError> {
    read_from(BufReader::new(File::open(path)?))
}
